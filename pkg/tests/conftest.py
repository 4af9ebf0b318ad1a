import numpy as np
import pytest

from synthtx.config import RunConfig
from synthtx.kernel import KernelConfig, fit_cme
from synthtx.simulation import StudySizes, draw_params, generate_study
from synthtx.study import FittedStudy


@pytest.fixture
def rng():
    return np.random.default_rng(seed=20231019)


@pytest.fixture(scope="session")
def small_study():
    rng = np.random.default_rng(seed=7)
    params = draw_params(rng)
    return generate_study(params, StudySizes(120, 120, 120), rng, seed=7)


@pytest.fixture(scope="session")
def fitted_small(small_study):
    return FittedStudy.new(small_study.dataset, RunConfig())


@pytest.fixture
def tiny_models():
    """Three sources and a target with a handful of points each."""
    rng = np.random.default_rng(seed=11)
    config = KernelConfig(bandwidth_x=0.8, bandwidth_y=1.5, lam=0.01)

    models = []
    for pop in range(4):
        n = 5 + pop
        x = rng.uniform(-1, 1, n)
        y = rng.normal(pop * 0.5, 1.0, n)
        models.append(fit_cme(pop, x, y, config))

    return models[1:], models[0]
