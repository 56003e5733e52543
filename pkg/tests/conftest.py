"""Shared fixtures; the heavy 1024^2 variance-ratio table is built once."""
import time

import numpy as np
import pytest

import fracfield as ff

RATIO_EXPONENTS = (0.5, 1.0, 1.5, 2.0, 2.5)
RATIO_SCALES = (2.0, 4.0, 8.0)
RATIO_SEEDS = tuple(range(10))


@pytest.fixture(scope="session")
def ratio_table():
    """Measured v2/v1 on 1024^2 power-law fields for every (a, scale, seed).

    Shared by the variance-law and exponent-recovery checks so the fields are
    synthesized and filtered only once per session.  Also records the worst
    wall time of a single filter-pair-plus-variance evaluation.
    """
    spec = ff.GridSpec(1024, 1024)
    bank = ff.build_filter_bank(spec, RATIO_SCALES)
    ratios = np.empty((len(RATIO_EXPONENTS), len(RATIO_SCALES), len(RATIO_SEEDS)))
    worst_seconds = 0.0
    for i, a in enumerate(RATIO_EXPONENTS):
        model = ff.SpectralPowerLaw(1.0, a)
        for k, seed in enumerate(RATIO_SEEDS):
            field = ff.synthesize_power_law_field(spec, model, seed)
            for j in range(len(RATIO_SCALES)):
                start = time.perf_counter()
                vp = ff.global_variance_pair(ff.filter_pair(field, bank, j))
                worst_seconds = max(worst_seconds, time.perf_counter() - start)
                ratios[i, j, k] = vp.v2 / vp.v1
    return {"exponents": RATIO_EXPONENTS, "scales": RATIO_SCALES,
            "seeds": RATIO_SEEDS, "ratios": ratios,
            "worst_seconds_per_field_scale": worst_seconds}


@pytest.fixture(scope="session")
def white_noise_exponents():
    """Per-scale global exponent estimates on ten i.i.d. Gaussian grids."""
    spec = ff.GridSpec(1024, 1024)
    bank = ff.build_filter_bank(spec, RATIO_SCALES)
    estimates = np.empty((len(RATIO_SCALES), len(RATIO_SEEDS)))
    for k, seed in enumerate(RATIO_SEEDS):
        field = ff.FieldGrid(spec, np.random.default_rng(seed).standard_normal(spec.shape))
        for j in range(len(RATIO_SCALES)):
            vp = ff.global_variance_pair(ff.filter_pair(field, bank, j))
            estimates[j, k] = ff.exponent_from_variances(vp)
    return estimates
