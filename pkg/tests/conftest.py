"""Shared fixtures: small synthetic problems reused across test modules."""
import numpy as np
import pytest

from spextremes import synthgen
from spextremes.inference import ModelSpec


@pytest.fixture(scope="session")
def tiny_m4():
    """5 stations x 10 years drawn from the full copula model."""
    spec = ModelSpec(variant="M4", n_splines=4)
    ds, cov, truth = synthgen.generate(spec, n_stations=5, n_years=10,
                                       seed=11)
    return spec, ds, cov, truth


@pytest.fixture(scope="session")
def small_m1():
    """8 stations x 30 years from the pointwise GHG-only model."""
    spec = ModelSpec(variant="M1")
    ds, cov, truth = synthgen.generate(spec, n_stations=8, n_years=30,
                                       seed=5)
    return spec, ds, cov, truth


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20210628)
