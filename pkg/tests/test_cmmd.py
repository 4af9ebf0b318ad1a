import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_almost_equal

from synthtx.cmmd import (
    cmmd_batch,
    cmmd_components,
    cmmd_value,
    pointwise_weight_rows,
    pointwise_weights,
    reported_cmmd,
)
from synthtx.errors import ConfigError, NumericError, ShapeError, SingularityError
from synthtx.kernel import KernelConfig, embedding_coefficients, fit_cme, gaussian_kernel


def embedding_distance(sources, target, x, w):
    """Squared RKHS distance by explicit double sums over the training outcomes."""
    h = target.config.bandwidth_y
    terms = [(wi, embedding_coefficients(m, [x]), m.train_y) for wi, m in zip(w, sources)]
    terms.append((-1.0, embedding_coefficients(target, [x]), target.train_y))

    total = 0.0
    for wi, alpha_i, y_i in terms:
        for wj, alpha_j, y_j in terms:
            for u in range(len(y_i)):
                for v in range(len(y_j)):
                    kernel = gaussian_kernel([y_i[u]], [y_j[v]], h)
                    total += wi * wj * alpha_i[u] * alpha_j[v] * kernel
    return total


def test_cmmd_matches_explicit_double_sums(tiny_models, rng):
    sources, target = tiny_models

    for x in np.linspace(-0.9, 0.9, 20):
        comp = cmmd_components(sources, target, [x])
        w = rng.dirichlet(np.ones(3))
        expected = embedding_distance(sources, target, x, w)
        assert_allclose(cmmd_value(comp, w), expected, rtol=1e-10, atol=1e-10)


def test_components_are_psd_and_nonnegative(tiny_models, rng):
    sources, target = tiny_models
    comp = cmmd_components(sources, target, [0.2])

    assert_allclose(comp.a_hat, comp.a_hat.T)
    eigenvalues = np.linalg.eigvalsh(comp.a_hat)
    scale = max(1.0, eigenvalues.max(), comp.c_hat)
    assert eigenvalues.min() >= -1e-10 * scale
    assert comp.c_hat >= 0

    for w in rng.dirichlet(np.ones(3), size=20):
        assert cmmd_value(comp, w) >= -1e-10 * scale


def test_batch_agrees_with_single_points(tiny_models):
    sources, target = tiny_models
    xs = np.linspace(-1, 1, 7)
    batch = cmmd_batch(sources, target, xs)

    assert len(batch) == 7
    for j, x in enumerate(xs):
        comp = cmmd_components(sources, target, [x])
        assert_allclose(batch[j].a_hat, comp.a_hat, rtol=1e-9, atol=1e-10)
        assert_allclose(batch[j].b_hat, comp.b_hat, rtol=1e-9, atol=1e-10)

    weights = np.full((7, 3), 1 / 3)
    expected = [cmmd_value(batch[j], weights[j]) for j in range(7)]
    assert_allclose(batch.values(weights), expected, rtol=1e-10, atol=1e-14)


def test_target_equal_to_a_source_gives_zero():
    rng = np.random.default_rng(seed=3)
    config = KernelConfig(1.0, 1.0)
    x, y = rng.normal(size=6), rng.normal(size=6)
    source = fit_cme(1, x, y, config)
    other = fit_cme(2, rng.normal(size=6), rng.normal(3.0, 1.0, 6), config)
    target = fit_cme(0, x, y, config)

    comp = cmmd_components([source, other], target, [0.0])
    assert_almost_equal(cmmd_value(comp, [1.0, 0.0]), 0.0, decimal=10)


def test_cmmd_value_shape_check(tiny_models):
    sources, target = tiny_models
    comp = cmmd_components(sources, target, [0.0])

    with pytest.raises(ShapeError):
        cmmd_value(comp, [0.5, 0.5])


def test_batch_rejects_mixed_bandwidths():
    source = fit_cme(1, [0.0, 1.0], [0.0, 1.0], KernelConfig(1.0, 1.0))
    target = fit_cme(0, [0.0, 1.0], [0.0, 1.0], KernelConfig(1.0, 2.0))

    with pytest.raises(ConfigError):
        cmmd_batch([source], target, [0.0])


def test_pointwise_constrained_is_on_simplex(tiny_models):
    sources, target = tiny_models

    for x in np.linspace(-1, 1, 5):
        comp = cmmd_components(sources, target, [x])
        result = pointwise_weights(comp)
        assert np.all(result.w >= 0)
        assert_almost_equal(result.w.sum(), 1.0, decimal=12)
        assert result.cmmd_value >= -1e-9 * max(1.0, float(np.trace(comp.a_hat)))


def test_pointwise_beats_uniform(tiny_models):
    sources, target = tiny_models
    comp = cmmd_components(sources, target, [0.3])
    result = pointwise_weights(comp)

    slack = 1e-8 * max(1.0, float(np.trace(comp.a_hat)))
    assert result.cmmd_value <= cmmd_value(comp, np.full(3, 1 / 3)) + slack


def test_pointwise_constrained_is_optimal_on_simplex(tiny_models, rng):
    sources, target = tiny_models

    for x in (-0.6, 0.0, 0.6):
        comp = cmmd_components(sources, target, [x])
        best = cmmd_value(comp, pointwise_weights(comp, ridge=0.0).w)
        for w in rng.dirichlet(np.ones(3), size=100):
            assert best <= cmmd_value(comp, w) + 1e-9


def test_pointwise_unconstrained_beats_constrained(tiny_models):
    sources, target = tiny_models
    comp = cmmd_components(sources, target, [0.3])

    constrained = pointwise_weights(comp, constrained=True)
    unconstrained = pointwise_weights(comp, constrained=False)
    ridge_slack = 1e-6 * max(1.0, float(np.trace(comp.a_hat)))
    assert unconstrained.cmmd_value <= constrained.cmmd_value + ridge_slack


def test_pointwise_unconstrained_singular():
    config = KernelConfig(1.0, 1.0)
    x, y = [0.0, 0.5, 1.0], [0.2, -0.4, 1.1]
    twins = [fit_cme(1, x, y, config), fit_cme(2, x, y, config)]
    target = fit_cme(0, [0.1, 0.7], [0.0, 0.3], config)

    comp = cmmd_components(twins, target, [0.5])
    with pytest.raises(SingularityError):
        pointwise_weights(comp, constrained=False, ridge=0.0)


def test_pointwise_weight_rows(tiny_models):
    sources, target = tiny_models
    batch = cmmd_batch(sources, target, np.linspace(-1, 1, 4))
    rows = pointwise_weight_rows(batch)

    assert rows.shape == (4, 3)
    assert_allclose(rows.sum(axis=1), np.ones(4))


def test_reported_cmmd():
    assert reported_cmmd(-1e-12) == 0.0
    assert reported_cmmd(0.25) == 0.25
    assert_allclose(reported_cmmd(np.array([-1e-10, 0.5])), [0.0, 0.5])

    with pytest.raises(NumericError):
        reported_cmmd(-1e-3)
