import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Protocol, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from synthtx.errors import InputError, NumericError, ShapeError
from synthtx.kernel import as_points
from synthtx.sieve import SieveBasis, fit_sieve_regression

logger = logging.getLogger(__name__)


class Method(Enum):
    SIEVE = "sieve"
    POINT_CONSTRAINED = "point_constrained"
    POINT_UNCONSTRAINED = "point_unconstrained"
    UNIFORM = "uniform"
    POOL = "pool"

    @property
    def has_inference(self) -> bool:
        return self in (Method.SIEVE, Method.UNIFORM, Method.POOL)


class WeightModel(Protocol):
    def weights_at(self, xs: ArrayLike) -> NDArray[np.float64]: ...


class Regression(Protocol):
    def predict(self, xs: ArrayLike) -> NDArray[np.float64]: ...


################################


@dataclass(slots=True, frozen=True)
class UniformWeights:
    n_sources: int

    def weights_at(self, xs: ArrayLike) -> NDArray[np.float64]:
        return np.full((len(as_points(xs)), self.n_sources), 1 / self.n_sources)


@dataclass(slots=True, frozen=True)
class OracleWeights:
    """
    Description
    -----------
    Weights given by a known function of the covariates, one row per point.

    """

    n_sources: int
    function: Callable[[NDArray[np.float64]], NDArray[np.float64]]

    def weights_at(self, xs: ArrayLike) -> NDArray[np.float64]:
        return np.atleast_2d(self.function(as_points(xs)))


@dataclass(slots=True, frozen=True)
class PointwiseWeightTable:
    """
    Description
    -----------
    Pointwise weights solved at a fixed set of covariate points. Lookups are exact;
    there is no interpolation between points.

    """

    xs: NDArray[np.float64]
    rows: NDArray[np.float64]
    constrained: bool
    index: dict[tuple[float, ...], int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if len(self.xs) != len(self.rows):
            raise ShapeError(f"{len(self.xs)} points vs {len(self.rows)} weight rows.")

        index = {tuple(point): k for k, point in enumerate(as_points(self.xs).tolist())}
        object.__setattr__(self, "index", index)

    @property
    def n_sources(self) -> int:
        return self.rows.shape[1]

    def weights_at(self, xs: ArrayLike) -> NDArray[np.float64]:
        points = as_points(xs)
        if points.shape == self.xs.shape and np.array_equal(points, self.xs):
            return self.rows

        try:
            return self.rows[[self.index[tuple(p)] for p in points.tolist()]]
        except KeyError as exc:
            raise InputError(f"No pointwise weights solved at covariate {exc.args[0]}.") from exc


################################


@dataclass(slots=True, frozen=True)
class ConfidenceInterval:
    lo: float
    hi: float
    level: float

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def contains(self, value: float) -> bool:
        return self.lo <= value <= self.hi

    def as_dict(self) -> dict[str, float]:
        return {"lo": self.lo, "hi": self.hi, "level": self.level}


@dataclass(slots=True)
class EstimateReport:
    method: Method
    theta_hat: float
    ate_hat: float
    variance: float | None
    ci: ConfidenceInterval | None
    n_total: int
    diagnostics: dict[str, object] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not np.isfinite(self.theta_hat):
            raise NumericError(f"Non-finite estimate for method {self.method.value}.")
        if self.ci is not None and not self.ci.contains(self.theta_hat):
            raise NumericError(
                f"Interval [{self.ci.lo}, {self.ci.hi}] excludes the estimate {self.theta_hat}."
            )

    def as_dict(self) -> dict[str, object]:
        return {
            "method": self.method.value,
            "theta_hat": self.theta_hat,
            "ate_hat": self.ate_hat,
            "variance": self.variance,
            "ci": None if self.ci is None else self.ci.as_dict(),
            "n_total": self.n_total,
            "diagnostics": dict(self.diagnostics),
        }


################################


def synthetic_terms(
    weights: WeightModel, regressions: Sequence[Regression], target_x: ArrayLike
) -> NDArray[np.float64]:
    """
    Description
    -----------
    sum_i w_i(x) g_i(x) at every target covariate.

    """
    points = as_points(target_x)
    if len(points) == 0:
        raise InputError("No target covariates to average over.")

    w = weights.weights_at(points)
    g = np.column_stack([regression.predict(points) for regression in regressions])
    if w.shape != g.shape:
        raise ShapeError(f"Weights {w.shape} do not match regressions {g.shape}.")

    return np.sum(w * g, axis=1)


def synthetic_theta(
    weights: WeightModel, regressions: Sequence[Regression], target_x: ArrayLike
) -> float:
    theta = float(np.mean(synthetic_terms(weights, regressions, target_x)))
    if not np.isfinite(theta):
        raise NumericError("Synthetic estimate is not finite.")

    return theta


def ate(theta_hat: float, target_control_y: ArrayLike) -> float:
    outcomes = np.asarray(target_control_y, dtype=float).ravel()
    if len(outcomes) == 0:
        raise InputError("No target control outcomes.")

    return theta_hat - float(np.mean(outcomes))


def pool_baseline(
    treated_x: ArrayLike, treated_y: ArrayLike, basis: SieveBasis, target_x: ArrayLike
) -> float:
    """
    Description
    -----------
    One sieve regression on the pooled source treated data, averaged over the
    target covariates.

    """
    regression = fit_sieve_regression(treated_x, treated_y, basis)
    return synthetic_theta(UniformWeights(1), [regression], target_x)


def uniform_baseline(regressions: Sequence[Regression], target_x: ArrayLike) -> float:
    if len(regressions) < 1:
        raise InputError("Uniform baseline needs at least one regression.")

    return synthetic_theta(UniformWeights(len(regressions)), regressions, target_x)
