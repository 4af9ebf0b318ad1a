import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_almost_equal

from synthtx.cmmd import cmmd_batch
from synthtx.errors import ConfigError, InputError, ShapeError, UnderdeterminedError
from synthtx.interval import Interval
from synthtx.kernel import KernelConfig, fit_cme
from synthtx.sieve import (
    AdditiveBasis,
    BSplineBasis,
    build_block_design,
    eval_basis,
    eval_regression,
    eval_weights,
    fit_sieve_regression,
    fit_sieve_weights,
    sieve_quadratic,
)


@pytest.fixture
def spline():
    return BSplineBasis(3, (0.0, 1.0), Interval(-1.0, 3.0))


def test_partition_of_unity(spline):
    design = spline.design(np.linspace(-1, 3, 1000))

    assert design.shape == (1000, 5)
    assert np.all(design >= -1e-14)
    assert_allclose(design.sum(axis=1), np.ones(1000), atol=1e-12)


def test_piecewise_constant_basis():
    basis = BSplineBasis(1, (1.0, 2.0), Interval(0.0, 3.0))

    assert basis.dim == 3
    assert_allclose(eval_basis(basis, 1.5), [0.0, 1.0, 0.0])
    assert_allclose(eval_basis(basis, 0.5), [1.0, 0.0, 0.0])


def test_quadratic_basis_is_continuous_at_knots(spline):
    for knot in spline.interior_knots:
        left = eval_basis(spline, knot - 1e-10)
        right = eval_basis(spline, knot + 1e-10)
        assert_allclose(left, right, atol=1e-8)


def test_points_outside_are_clamped(spline):
    assert_allclose(eval_basis(spline, -5.0), eval_basis(spline, -1.0))
    assert_allclose(eval_basis(spline, 9.0), eval_basis(spline, 3.0))
    assert spline.count_outside([-5.0, 0.0, 9.0]) == 2


def test_basis_validation():
    with pytest.raises(ConfigError):
        BSplineBasis(0, (), Interval(0.0, 1.0))
    with pytest.raises(ConfigError):
        BSplineBasis(3, (0.5, 0.2), Interval(0.0, 1.0))
    with pytest.raises(ConfigError):
        BSplineBasis(3, (1.0,), Interval(0.0, 1.0))


def test_basis_from_sample_quantile_knots(rng):
    xs = rng.uniform(0, 1, 500)
    basis = BSplineBasis.from_sample(xs, 3, 2)

    assert basis.dim == 5
    assert_allclose(basis.interior_knots, np.quantile(xs, [1 / 3, 2 / 3]))
    assert basis.domain.lo < xs.min() and basis.domain.hi > xs.max()


def test_scalar_basis_rejects_vectors(spline):
    with pytest.raises(ShapeError):
        spline.design(np.zeros((3, 2)))


def test_block_design(spline):
    design = build_block_design([spline, spline], 0.5)

    assert design.shape == (10, 2)
    assert_allclose(design[:5, 0], eval_basis(spline, 0.5))
    assert_allclose(design[5:, 1], eval_basis(spline, 0.5))
    assert np.all(design[5:, 0] == 0) and np.all(design[:5, 1] == 0)


def test_additive_basis_has_intercept(rng):
    xs = rng.normal(size=(200, 2))
    basis = AdditiveBasis.from_sample(xs, 3, 2)
    design = basis.design(xs)

    assert basis.dim == 9
    assert design.shape == (200, 9)
    assert np.all(design[:, 0] == 1)


################################


def test_regression_reproduces_span(spline, rng):
    xs = rng.uniform(-1, 3, 50)
    beta = rng.normal(size=5)
    model = fit_sieve_regression(xs, spline.design(xs) @ beta, spline)

    assert_allclose(model.beta_g, beta, atol=1e-8)
    for x in rng.uniform(-1, 3, 5):
        assert_almost_equal(eval_regression(model, x), eval_basis(spline, x) @ beta, decimal=8)


def test_regression_constant_outcome(spline, rng):
    model = fit_sieve_regression(rng.uniform(-1, 3, 30), np.full(30, 4.2), spline)

    assert_allclose(model.predict(np.linspace(-1, 3, 11)), np.full(11, 4.2), atol=1e-10)
    assert not model.beta_g.flags.writeable


def test_regression_matches_least_squares(spline, rng):
    xs = rng.uniform(-1, 3, 80)
    ys = 2 * xs + rng.normal(size=80)
    model = fit_sieve_regression(xs, ys, spline)

    expected = np.linalg.lstsq(spline.design(xs), ys, rcond=None)[0]
    assert_allclose(model.beta_g, expected, rtol=1e-8, atol=1e-10)


def test_regression_additive_constant(rng):
    xs = rng.normal(size=(100, 2))
    basis = AdditiveBasis.from_sample(xs, 3, 1)
    model = fit_sieve_regression(xs, np.full(100, -1.5), basis)

    assert_allclose(model.predict(xs[:10]), np.full(10, -1.5), atol=1e-10)


def test_regression_underdetermined(spline):
    with pytest.raises(UnderdeterminedError):
        fit_sieve_regression([0.0, 1.0, 2.0], [1.0, 2.0, 3.0], spline)


def test_regression_length_mismatch(spline):
    with pytest.raises(ShapeError):
        fit_sieve_regression(np.linspace(0, 1, 10), np.zeros(9), spline)


################################


def weight_bases(target_x, n_sources, order=3, knots=0):
    basis = BSplineBasis.from_sample(target_x, order, knots)
    return [basis] * n_sources


def test_sieve_quadratic_matches_batch_average(tiny_models, rng):
    sources, target = tiny_models
    bases = weight_bases(target.train_x, 3)
    batch = cmmd_batch(sources, target, target.train_x)
    quad, linear = sieve_quadratic(batch, bases)

    beta = rng.normal(size=9)
    weights = np.column_stack(
        [b.design(batch.xs) @ beta[3 * i : 3 * i + 3] for i, b in enumerate(bases)]
    )
    expected = np.mean(batch.values(weights))
    objective = beta @ quad @ beta - 2 * beta @ linear + batch.c_hat.mean()
    assert_allclose(objective, expected, rtol=1e-8, atol=1e-10)


def test_constrained_weights_on_simplex(tiny_models, rng):
    sources, target = tiny_models
    model = fit_sieve_weights(sources, target, target.train_x, weight_bases(target.train_x, 3))
    domain = model.bases[0].domain

    weights = model.weights_at(rng.uniform(domain.lo, domain.hi, 100))
    assert np.all(weights >= -1e-10)
    assert_allclose(weights.sum(axis=1), np.ones(100), atol=1e-10)
    assert_allclose(eval_weights(model, domain.center), model.weights_at([domain.center])[0])


def test_constrained_weights_beat_uniform(tiny_models):
    sources, target = tiny_models
    batch = cmmd_batch(sources, target, target.train_x)
    model = fit_sieve_weights(
        sources, target, target.train_x, weight_bases(target.train_x, 3), batch=batch
    )

    uniform = np.mean(batch.values(np.full((len(batch), 3), 1 / 3)))
    slack = 1e-6 * max(1.0, float(np.trace(batch.a_hat.mean(axis=0))))
    assert model.average_cmmd <= uniform + slack


def test_single_source_weights_are_one(tiny_models):
    sources, target = tiny_models
    bases = weight_bases(target.train_x, 1)
    model = fit_sieve_weights(sources[:1], target, target.train_x, bases)

    assert_allclose(model.weights_at(np.linspace(-1, 1, 9)), np.ones((9, 1)), atol=1e-10)


def test_pointwise_simplex_holds_at_target_points(tiny_models):
    sources, target = tiny_models
    model = fit_sieve_weights(
        sources,
        target,
        target.train_x,
        weight_bases(target.train_x, 3, knots=1),
        pointwise_simplex=True,
    )

    weights = model.weights_at(target.train_x)
    assert model.pointwise_simplex
    assert np.all(weights >= -1e-9)
    assert_allclose(weights.sum(axis=1), np.ones(len(weights)), atol=1e-9)


def test_unconstrained_weights(fitted_small):
    study = fitted_small
    bases = study.weight_bases
    quad, _ = sieve_quadratic(study.batch, bases)
    ridge = 1e-6 * float(np.trace(quad)) / len(quad)

    model = fit_sieve_weights(
        study.sources,
        study.target,
        study.batch.xs,
        bases,
        constrained=False,
        ridge=ridge,
        batch=study.batch,
    )

    # Simplex coefficients have squared norm at most the number of coefficients.
    constrained = study.sieve_weights()
    assert not model.constrained
    assert model.average_cmmd <= constrained.average_cmmd + ridge * len(quad) + 1e-8


def test_weights_reject_vector_covariates(tiny_models):
    sources, target = tiny_models

    with pytest.raises(ConfigError):
        fit_sieve_weights(sources, target, np.zeros((4, 2)), weight_bases(target.train_x, 3))


def test_weights_reject_mismatched_bases(tiny_models):
    sources, target = tiny_models
    bases = weight_bases(target.train_x, 3)

    with pytest.raises(ConfigError):
        fit_sieve_weights(sources, target, target.train_x, bases[:2])

    mixed = [bases[0], bases[1], BSplineBasis.from_sample(target.train_x, 2, 0)]
    with pytest.raises(ConfigError):
        fit_sieve_weights(sources, target, target.train_x, mixed)


def test_weights_need_target_points(tiny_models):
    sources, target = tiny_models

    with pytest.raises(InputError):
        fit_sieve_weights(sources, target, np.zeros((0, 1)), weight_bases(target.train_x, 3))


@pytest.mark.slow
def test_constant_weights_recovered():
    rng = np.random.default_rng(seed=31)
    n, means = 1000, np.array([-3.0, 0.0, 3.0])
    truth = np.array([0.8, 0.1, 0.1])

    source_data = []
    for mean in means:
        x = rng.uniform(-1, 3, n)
        source_data.append((x, rng.normal(mean + 0.5 * x, 1.0)))
    target_x = rng.uniform(-1, 3, n)
    component = rng.choice(3, size=n, p=truth)
    target_y = rng.normal(means[component] + 0.5 * target_x, 1.0)

    config = KernelConfig.from_data(
        np.concatenate([x for x, _ in source_data] + [target_x]),
        np.concatenate([y for _, y in source_data] + [target_y]),
    )
    sources = [fit_cme(i + 1, x, y, config) for i, (x, y) in enumerate(source_data)]
    target = fit_cme(0, target_x, target_y, config)

    basis = BSplineBasis(3, (), Interval(-1.0, 3.0))
    model = fit_sieve_weights(sources, target, target_x, [basis, basis, basis])
    grid = np.linspace(-1, 3, 101)

    assert np.max(np.abs(model.weights_at(grid) - truth)) <= 0.1
