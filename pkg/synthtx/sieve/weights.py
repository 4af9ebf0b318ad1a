import logging
from dataclasses import dataclass
from typing import Final, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from synthtx.cmmd import CmmdBatch, cmmd_batch
from synthtx.errors import ConfigError, InputError, SingularityError
from synthtx.kernel import CmeModel, OutcomeGramCache, as_points
from synthtx.linalg import symmetrize
from synthtx.qp import QpProblem, solve
from synthtx.sieve.basis import BSplineBasis, block_offsets

logger = logging.getLogger(__name__)

RIDGE_SCALE: Final[float] = 1e-8


@dataclass(slots=True, frozen=True)
class SieveWeightModel:
    """
    Description
    -----------
    Weight functions w_i(x) = P_i(x)' beta_i with beta_w stacked over populations.

    """

    bases: tuple[BSplineBasis, ...]
    beta_w: NDArray[np.float64]
    constrained: bool
    pointwise_simplex: bool = False
    average_cmmd: float = float("nan")

    @property
    def n_sources(self) -> int:
        return len(self.bases)

    def coefficients(self, i: int) -> NDArray[np.float64]:
        return self.beta_w[block_offsets(self.bases)[i]]

    def weights_at(self, xs: ArrayLike) -> NDArray[np.float64]:
        points = as_points(xs)
        return np.column_stack(
            [basis.design(points) @ self.coefficients(i) for i, basis in enumerate(self.bases)]
        )

    def as_dict(self) -> dict:
        return {
            "bases": [basis.as_dict() for basis in self.bases],
            "beta_w": self.beta_w.tolist(),
            "constrained": self.constrained,
            "pointwise_simplex": self.pointwise_simplex,
        }


def eval_weights(model: SieveWeightModel, x: float) -> NDArray[np.float64]:
    return model.weights_at([x])[0]


################################


def sieve_quadratic(
    batch: CmmdBatch, bases: Sequence[BSplineBasis]
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """
    Description
    -----------
    Average CMMD over the batch points as a quadratic in beta_w:
    beta' R beta - 2 beta' u with R = mean V A V' and u = mean V b.

    """
    designs = [basis.design(batch.xs) for basis in bases]
    offsets = block_offsets(bases)
    size = offsets[-1].stop
    n_points = len(batch)

    quad = np.zeros((size, size))
    linear = np.zeros(size)
    for i, (rows_i, design_i) in enumerate(zip(offsets, designs)):
        linear[rows_i] = design_i.T @ batch.b_hat[:, i] / n_points
        for j, (rows_j, design_j) in enumerate(zip(offsets, designs)):
            weighted = design_i * batch.a_hat[:, i, j][:, None]
            quad[rows_i, rows_j] = weighted.T @ design_j / n_points

    return symmetrize(quad), linear


def fit_sieve_weights(
    sources: Sequence[CmeModel],
    target: CmeModel,
    target_x: ArrayLike,
    bases: Sequence[BSplineBasis],
    constrained: bool = True,
    pointwise_simplex: bool = False,
    ridge: float | None = None,
    batch: CmmdBatch | None = None,
    cache: OutcomeGramCache | None = None,
) -> SieveWeightModel:
    """
    Description
    -----------
    Sieve weight coefficients minimizing the average CMMD over the target
    covariates.

    With `constrained`, identical bases are required and every basis index has
    coefficients summing to one across populations and nonnegative coefficients,
    which makes the weights lie on the simplex everywhere. With
    `pointwise_simplex`, the simplex is enforced only at the observed target
    points instead.

    Parameters
    ----------
    ridge : float | None
        Added to the diagonal of the aggregate quadratic. Defaults to
        1e-8 * trace / dim when constrained and 0 otherwise.

    batch : CmmdBatch | None
        Precomputed CMMD components at `target_x`.

    Raises
    ------
    ConfigError
        Multivariate covariates, or differing bases in coefficient-constrained mode.
    SingularityError
        Unconstrained fit of a rank-deficient quadratic without ridge.

    """
    points = as_points(target_x)
    if len(points) == 0:
        raise InputError("No target covariates to fit sieve weights on.")
    if points.shape[1] != 1:
        raise ConfigError(
            "Sieve weights need a scalar covariate; use a pointwise method instead."
        )
    if len(bases) != len(sources):
        raise ConfigError(f"Got {len(bases)} bases for {len(sources)} sources.")

    if batch is None:
        batch = cmmd_batch(sources, target, points, cache)

    quad, linear = sieve_quadratic(batch, bases)
    size: Final = len(linear)
    n: Final = len(bases)
    identical = all(basis == bases[0] for basis in bases)

    if ridge is None:
        ridge = RIDGE_SCALE * float(np.trace(quad)) / size if constrained else 0.0
    quad = quad + ridge * np.eye(size)

    if not constrained:
        if np.linalg.cond(quad) > 1 / (size * np.finfo(float).eps):
            raise SingularityError(
                "Average CMMD quadratic is rank-deficient; set a positive ridge."
            )
        problem = QpProblem(quad, linear)
    elif pointwise_simplex:
        problem = _pointwise_simplex_problem(quad, linear, bases, points[:, 0], identical)
    else:
        if not identical:
            raise ConfigError("Coefficient-constrained sieve weights need identical bases.")
        problem = _coefficient_simplex_problem(quad, linear, n, bases[0].dim)

    solution = solve(problem)
    beta = solution.x
    average = float(np.mean(batch.values(_weights_from(beta, bases, batch.xs))))

    logger.debug(
        "Sieve weights fitted: %d coefficients, %d iterations, average CMMD %.6g.",
        size,
        solution.iterations,
        average,
    )
    return SieveWeightModel(
        tuple(bases), beta, constrained, constrained and pointwise_simplex, average
    )


def _weights_from(
    beta: NDArray[np.float64], bases: Sequence[BSplineBasis], xs: NDArray[np.float64]
) -> NDArray[np.float64]:
    offsets = block_offsets(bases)
    return np.column_stack([b.design(xs) @ beta[o] for b, o in zip(bases, offsets)])


def _coefficient_simplex_problem(
    quad: NDArray[np.float64], linear: NDArray[np.float64], n: int, dim: int
) -> QpProblem:
    # Column k of the (n, dim) coefficient grid sums to one.
    eq_lhs = np.tile(np.eye(dim), (1, n))
    return QpProblem(
        quad,
        linear,
        eq_lhs=eq_lhs,
        eq_rhs=np.ones(dim),
        lower_bounds=np.zeros(n * dim),
        start=np.full(n * dim, 1 / n),
    )


def _pointwise_simplex_problem(
    quad: NDArray[np.float64],
    linear: NDArray[np.float64],
    bases: Sequence[BSplineBasis],
    xs: NDArray[np.float64],
    identical: bool,
) -> QpProblem:
    distinct = np.unique(xs)
    designs = [basis.design(distinct) for basis in bases]
    offsets = block_offsets(bases)
    size = len(linear)

    ineq_rows = []
    for design, rows in zip(designs, offsets):
        block = np.zeros((len(distinct), size))
        block[:, rows] = design
        ineq_rows.append(block)

    start = np.full(size, 1 / len(bases)) if identical else None
    return QpProblem(
        quad,
        linear,
        eq_lhs=np.hstack(designs),
        eq_rhs=np.ones(len(distinct)),
        ineq_lhs=np.vstack(ineq_rows),
        ineq_rhs=np.zeros(len(distinct) * len(bases)),
        start=start,
    )
