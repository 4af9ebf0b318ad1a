"""
Sieve-score variance estimation.

Every observation gets a score made of the moment term, a weight adjustment for
target rows and a regression adjustment for source treated rows. The variance of
the estimate is the sample variance of the scores over n_T.
"""

import logging
from dataclasses import dataclass
from typing import Final, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.stats import norm

from synthtx.cmmd import CmmdBatch, CmmdComponents
from synthtx.dataset import CONTROL, TARGET, TREATED, Dataset, Observation
from synthtx.errors import DatasetError, InferenceError, InputError
from synthtx.estimator import ConfidenceInterval, WeightModel
from synthtx.kernel import as_points
from synthtx.linalg import spd_solve
from synthtx.sieve import SieveRegressionModel, SieveWeightModel, block_offsets, sieve_quadratic

logger = logging.getLogger(__name__)


@dataclass(slots=True, frozen=True)
class AdjustmentComponents:
    """
    Description
    -----------
    R and Gamma of the weight and regression adjustment terms, plus the solved
    kappa = R^-1 Gamma' used in the scores. The weight part is absent when the
    weights were not fitted by the sieve.

    """

    r_w_hat: NDArray[np.float64] | None
    gamma2_w_hat: NDArray[np.float64] | None
    r_g_hat: tuple[NDArray[np.float64], ...]
    gamma2_g_hat: tuple[NDArray[np.float64], ...]
    kappa_w: NDArray[np.float64] | None
    kappa_g: tuple[NDArray[np.float64], ...]


@dataclass(slots=True, frozen=True)
class ScoreState:
    """
    Description
    -----------
    Everything a score needs besides the observation. With `pooled`, treated rows
    of every source belong to the single regression group 0.

    """

    theta_hat: float
    weights: WeightModel
    regressions: tuple[SieveRegressionModel, ...]
    components: AdjustmentComponents
    n_total: int
    n_target: int
    n_treated: tuple[int, ...]
    n_sources: int
    sieve: SieveWeightModel | None = None
    pooled: bool = False

    def group_of(self, pop: int) -> int:
        return 0 if self.pooled else pop - 1


@dataclass(slots=True)
class SieveScores:
    scores: NDArray[np.float64]
    theta_hat: float

    def __post_init__(self) -> None:
        if not np.all(np.isfinite(self.scores)):
            raise InferenceError("Non-finite scores.")


################################


def adjustment_components(
    regressions: Sequence[SieveRegressionModel],
    treated_x: Sequence[ArrayLike],
    weights: WeightModel,
    sieve: SieveWeightModel | None = None,
    batch: CmmdBatch | None = None,
) -> AdjustmentComponents:
    """
    Description
    -----------
    R_w = (2/n0) sum V A V', Gamma_w = -(1/n0) sum [g_1 P_1', ..., g_N P_N'] over
    the target points of `batch`; R_g = (2/m) sum Q Q' and
    Gamma_g = (1/m) sum w_k Q' over the treated covariates of each regression.

    Raises
    ------
    InferenceError
        Singular R after jitter.

    """
    r_g, gamma_g, kappa_g = [], [], []
    for k, (regression, x) in enumerate(zip(regressions, treated_x, strict=True)):
        points = as_points(x)
        design = regression.basis.design(points)
        w = weights.weights_at(points)[:, k]

        r = 2 * design.T @ design / len(points)
        gamma = (w @ design) / len(points)
        r_g.append(r)
        gamma_g.append(gamma)
        kappa_g.append(spd_solve(r, gamma, f"regression R of group {k}", InferenceError))

    r_w = gamma_w = kappa_w = None
    if sieve is not None:
        if batch is None:
            raise InputError("Sieve adjustment needs the CMMD components at the target.")

        r_w = 2 * sieve_quadratic(batch, sieve.bases)[0]
        gamma_w = -np.concatenate(
            [
                (r.predict(batch.xs)[:, None] * b.design(batch.xs)).mean(axis=0)
                for r, b in zip(regressions, sieve.bases, strict=True)
            ]
        )
        kappa_w = spd_solve(r_w, gamma_w, "weight R", InferenceError)

    return AdjustmentComponents(r_w, gamma_w, tuple(r_g), tuple(gamma_g), kappa_w, tuple(kappa_g))


def per_observation_score(
    z: Observation, state: ScoreState, comp: CmmdComponents | None = None
) -> float:
    """
    Description
    -----------
    Score of one observation. Target rows need `comp`, the CMMD components at
    their covariate, when the weights come from the sieve.

    Raises
    ------
    DatasetError
        Observation from no known stratum.

    """
    score = state.theta_hat
    point = as_points(z.x.reshape(1, -1))

    match (z.pop, z.arm):
        case (pop, arm) if pop == TARGET and arm == CONTROL:
            p_target = state.n_target / state.n_total
            w = state.weights.weights_at(point)[0]
            g = np.array([r.predict(point)[0] for r in state.regressions])
            score -= float(w @ g) / p_target

            if state.components.kappa_w is not None:
                if comp is None:
                    raise InputError("Target score needs the CMMD components at its covariate.")
                psi = _weight_directions(state, point)[0]
                gradient = -2 * comp.a_hat @ w + 2 * comp.b_hat
                score += float(psi @ gradient) / p_target

        case (pop, arm) if arm == TREATED and 1 <= pop <= state.n_sources:
            k = state.group_of(pop)
            regression = state.regressions[k]
            design = regression.basis.design(point)[0]
            residual = z.y - float(design @ regression.beta_g)
            p_treated = state.n_treated[k] / state.n_total
            score += 2 * float(design @ state.components.kappa_g[k]) * residual / p_treated

        case (pop, arm) if arm == CONTROL and 1 <= pop <= state.n_sources:
            pass

        case _:
            raise DatasetError(f"Observation (pop={z.pop}, arm={z.arm}) is in no stratum.")

    return score


def sieve_scores(
    dataset: Dataset, state: ScoreState, batch: CmmdBatch | None = None
) -> SieveScores:
    """
    Description
    -----------
    Scores for every row of the dataset, in row order. `batch` holds the CMMD
    components at the target rows, in row order.

    """
    scores = np.full(len(dataset), state.theta_hat)
    n_total: Final = state.n_total

    target = dataset.mask(TARGET, CONTROL)
    points = dataset.x[target]
    p_target = state.n_target / n_total
    w = state.weights.weights_at(points)
    g = np.column_stack([r.predict(points) for r in state.regressions])
    adjustment = -np.sum(w * g, axis=1)

    if state.components.kappa_w is not None:
        if batch is None or len(batch) != len(points):
            raise InputError("Target scores need the CMMD components at every target row.")
        psi = _weight_directions(state, points)
        gradient = -2 * np.einsum("pij,pj->pi", batch.a_hat, w) + 2 * batch.b_hat
        adjustment += np.sum(psi * gradient, axis=1)

    scores[target] += adjustment / p_target

    for pop in range(1, state.n_sources + 1):
        treated = dataset.mask(pop, TREATED)
        k = state.group_of(pop)
        regression = state.regressions[k]
        design = regression.basis.design(dataset.x[treated])
        residual = dataset.y[treated] - design @ regression.beta_g
        p_treated = state.n_treated[k] / n_total
        scores[treated] += 2 * (design @ state.components.kappa_g[k]) * residual / p_treated

    return SieveScores(scores, state.theta_hat)


def _weight_directions(state: ScoreState, points: NDArray[np.float64]) -> NDArray[np.float64]:
    # Column i is kappa_w,i' P_i(x): the weight-space direction of the adjustment.
    bases = state.sieve.bases
    kappa = state.components.kappa_w
    return np.column_stack(
        [b.design(points) @ kappa[rows] for b, rows in zip(bases, block_offsets(bases))]
    )


################################


def normal_interval(
    theta_hat: float, variance: float, n: int, alpha: float
) -> ConfidenceInterval:
    if not 0 < alpha < 1:
        raise InputError(f"alpha must lie in (0, 1), got {alpha}.")

    half_width = np.sqrt(variance / n) * float(norm.ppf(1 - alpha / 2))
    return ConfidenceInterval(theta_hat - half_width, theta_hat + half_width, 1 - alpha)


def variance_and_ci(
    scores: SieveScores, alpha: float
) -> tuple[float, ConfidenceInterval]:
    """
    Description
    -----------
    V = (1/n_T) sum (S - mean S)^2 and the interval theta +/- sqrt(V/n_T) z_{1-alpha/2}.

    """
    if not 0 < alpha < 1:
        raise InputError(f"alpha must lie in (0, 1), got {alpha}.")

    n: Final = len(scores.scores)
    if n < 2:
        raise InputError("Variance needs at least two observations.")

    centered = scores.scores - scores.scores.mean()
    variance = float(np.mean(centered**2))

    logger.debug("Score variance %.6g over %d observations.", variance, n)
    return variance, normal_interval(scores.theta_hat, variance, n, alpha)
