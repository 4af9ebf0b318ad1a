import logging
from dataclasses import dataclass
from typing import Final, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from synthtx.errors import ConfigError, NumericError, ShapeError, SingularityError
from synthtx.kernel import (
    CmeModel,
    OutcomeGramCache,
    as_points,
    cross_outcome_gram,
    embedding_matrix,
)
from synthtx.qp import solve_simplex_qp

logger = logging.getLogger(__name__)

RIDGE_SCALE: Final[float] = 1e-8
NEGATIVE_CMMD_TOLERANCE: Final[float] = 1e-9
CHUNK_SIZE: Final[int] = 512


@dataclass(slots=True)
class CmmdComponents:
    """
    Description
    -----------
    Quadratic d(x, w) = w'Aw - 2w'b + c: the squared RKHS distance between the
    w-mixture of source embeddings and the target embedding at covariate x.

    """

    a_hat: NDArray[np.float64]
    b_hat: NDArray[np.float64]
    c_hat: float
    x: NDArray[np.float64]

    @property
    def n_sources(self) -> int:
        return len(self.b_hat)


@dataclass(slots=True)
class PointwiseWeights:
    x: NDArray[np.float64]
    w: NDArray[np.float64]
    constrained: bool
    cmmd_value: float


@dataclass(slots=True)
class CmmdBatch:
    """
    Description
    -----------
    CMMD components at many covariate points, stacked along the first axis.

    """

    a_hat: NDArray[np.float64]
    b_hat: NDArray[np.float64]
    c_hat: NDArray[np.float64]
    xs: NDArray[np.float64]

    def __len__(self) -> int:
        return len(self.c_hat)

    def __getitem__(self, index: int) -> CmmdComponents:
        return CmmdComponents(
            self.a_hat[index], self.b_hat[index], float(self.c_hat[index]), self.xs[index]
        )

    @property
    def n_sources(self) -> int:
        return self.b_hat.shape[1]

    def values(self, weights: NDArray[np.float64]) -> NDArray[np.float64]:
        """
        Description
        -----------
        d(x_j, w_j) for one weight row per point.

        """
        quad = np.einsum("pi,pij,pj->p", weights, self.a_hat, weights)
        return quad - 2 * np.einsum("pi,pi->p", weights, self.b_hat) + self.c_hat


################################


def cmmd_components(
    sources: Sequence[CmeModel],
    target: CmeModel,
    x: ArrayLike,
    cache: OutcomeGramCache | None = None,
) -> CmmdComponents:
    point = np.atleast_1d(np.asarray(x, dtype=float))
    return cmmd_batch(sources, target, point.reshape(1, -1), cache)[0]


def cmmd_batch(
    sources: Sequence[CmeModel],
    target: CmeModel,
    xs: ArrayLike,
    cache: OutcomeGramCache | None = None,
) -> CmmdBatch:
    """
    Description
    -----------
    [A]_ij = alpha_i' L_ij alpha_j, [b]_i = alpha_i' L_i0 alpha_0 and
    c = alpha_0' L_00 alpha_0 at every point, where alpha are embedding
    coefficients and L cross outcome Grams. Points are processed in fixed-size
    chunks.

    """
    if len(sources) < 1:
        raise ConfigError("At least one source population is required.")

    bandwidths = {m.config.bandwidth_y for m in (*sources, target)}
    if len(bandwidths) != 1:
        raise ConfigError(f"Populations disagree on the outcome bandwidth: {bandwidths}.")

    points = as_points(xs)
    models: Final = (*sources, target)
    n: Final = len(sources)
    grams = {
        (i, j): cross_outcome_gram(models[i], models[j], cache)
        for i in range(n + 1)
        for j in range(i, n + 1)
    }

    a_hat = np.empty((len(points), n, n))
    b_hat = np.empty((len(points), n))
    c_hat = np.empty(len(points))

    for beg in range(0, len(points), CHUNK_SIZE):
        chunk = slice(beg, beg + CHUNK_SIZE)
        alphas = [embedding_matrix(m, points[chunk]) for m in models]

        for (i, j), gram in grams.items():
            inner = np.einsum("up,up->p", alphas[i], gram @ alphas[j])
            if j < n:
                a_hat[chunk, i, j] = inner
                a_hat[chunk, j, i] = inner
            elif i < n:
                b_hat[chunk, i] = inner
            else:
                c_hat[chunk] = inner

    return CmmdBatch(a_hat, b_hat, c_hat, points)


def cmmd_value(comp: CmmdComponents, w: ArrayLike) -> float:
    weights = np.atleast_1d(np.asarray(w, dtype=float))
    if weights.shape != comp.b_hat.shape:
        raise ShapeError(f"Expected {comp.n_sources} weights, got {weights.shape}.")

    return float(weights @ comp.a_hat @ weights - 2 * weights @ comp.b_hat + comp.c_hat)


def reported_cmmd(value: float | NDArray[np.float64]) -> float | NDArray[np.float64]:
    """
    Description
    -----------
    Clamp round-off negatives to zero. A CMMD is a squared norm, so anything below
    the tolerance means the components are inconsistent.

    """
    values = np.asarray(value, dtype=float)
    if np.any(values < -NEGATIVE_CMMD_TOLERANCE):
        raise NumericError(f"Negative CMMD {values.min():.3e} beyond round-off.")

    clamped = np.maximum(values, 0.0)
    return float(clamped) if clamped.ndim == 0 else clamped


def default_ridge(a_hat: NDArray[np.float64]) -> float:
    return RIDGE_SCALE * float(np.trace(a_hat)) / len(a_hat)


################################


def pointwise_weights(
    comp: CmmdComponents, constrained: bool = True, ridge: float | None = None
) -> PointwiseWeights:
    """
    Description
    -----------
    Minimize the CMMD at one covariate point, over the simplex when `constrained`
    and over all of R^N otherwise. `ridge` is added to the diagonal of A first; by
    default 1e-8 * trace(A) / N.

    Raises
    ------
    SingularityError
        Unconstrained solve on a singular matrix.

    """
    n: Final = comp.n_sources
    if ridge is None:
        ridge = default_ridge(comp.a_hat)

    q = comp.a_hat + ridge * np.eye(n)

    if constrained:
        w = solve_simplex_qp(q, comp.b_hat)
    else:
        w = _solve_unconstrained(q, comp.b_hat)

    return PointwiseWeights(comp.x, w, constrained, cmmd_value(comp, w))


def _solve_unconstrained(
    q: NDArray[np.float64], b: NDArray[np.float64]
) -> NDArray[np.float64]:
    if np.linalg.cond(q) > 1 / (len(q) * np.finfo(float).eps):
        raise SingularityError("CMMD matrix is singular; set a positive ridge.")

    try:
        return cho_solve(cho_factor(q, lower=True), b)
    except LinAlgError as exc:
        raise SingularityError("CMMD matrix is singular; set a positive ridge.") from exc


def pointwise_weight_rows(
    batch: CmmdBatch, constrained: bool = True, ridge: float | None = None
) -> NDArray[np.float64]:
    """
    Description
    -----------
    Pointwise weights at every point of a batch, one row per point.

    """
    rows = np.empty((len(batch), batch.n_sources))
    for j in range(len(batch)):
        rows[j] = pointwise_weights(batch[j], constrained, ridge).w

    return rows
