"""
Dense convex quadratic programs

    minimize    x' q x - 2 x' c
    subject to  eq_lhs x = eq_rhs,  ineq_lhs x >= ineq_rhs,  x >= lower_bounds

solved with a primal active-set method. Problems here are small (a handful of
source populations, or a few dozen sieve coefficients), so every subproblem is an
exact dense KKT solve.
"""

import logging
from dataclasses import dataclass, field
from typing import Final

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.optimize import linprog

from synthtx.errors import FeasibilityError, ShapeError, SolverError

logger = logging.getLogger(__name__)

KKT_TOLERANCE: Final[float] = 1e-7
FEASIBILITY_TOLERANCE: Final[float] = 1e-8
SYMMETRY_TOLERANCE: Final[float] = 1e-10
ITERATIONS_PER_VARIABLE: Final[int] = 100


@dataclass(slots=True)
class QpProblem:
    q: NDArray[np.float64]
    c: NDArray[np.float64]
    eq_lhs: NDArray[np.float64] | None = None
    eq_rhs: NDArray[np.float64] | None = None
    lower_bounds: NDArray[np.float64] | None = None
    ineq_lhs: NDArray[np.float64] | None = None
    ineq_rhs: NDArray[np.float64] | None = None
    start: NDArray[np.float64] | None = None
    max_iterations: int | None = None

    def __post_init__(self) -> None:
        self.q = np.atleast_2d(np.asarray(self.q, dtype=float))
        self.c = np.atleast_1d(np.asarray(self.c, dtype=float))
        n = len(self.c)

        if self.q.shape != (n, n):
            raise ShapeError(f"q has shape {self.q.shape}, expected {(n, n)}.")

        scale = max(1.0, float(np.max(np.abs(self.q))))
        if np.max(np.abs(self.q - self.q.T)) > SYMMETRY_TOLERANCE * scale:
            raise ShapeError("q must be symmetric.")

        self.eq_lhs, self.eq_rhs = _rows(self.eq_lhs, self.eq_rhs, n, "equality")
        self.ineq_lhs, self.ineq_rhs = _rows(self.ineq_lhs, self.ineq_rhs, n, "inequality")

        if self.lower_bounds is not None:
            self.lower_bounds = np.asarray(self.lower_bounds, dtype=float).ravel()
            if len(self.lower_bounds) != n:
                raise ShapeError(f"lower_bounds must have length {n}.")

        if self.start is not None:
            self.start = np.asarray(self.start, dtype=float).ravel()

    @property
    def n(self) -> int:
        return len(self.c)

    def objective(self, x: NDArray[np.float64]) -> float:
        return float(x @ self.q @ x - 2 * x @ self.c)

    def inequality_rows(self) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        """
        Description
        -----------
        General inequalities and finite lower bounds as one system G x >= h.

        """
        g, h = self.ineq_lhs, self.ineq_rhs
        if self.lower_bounds is None:
            return g, h

        bounded = np.flatnonzero(np.isfinite(self.lower_bounds))
        return (
            np.vstack((g, np.eye(self.n)[bounded])),
            np.concatenate((h, self.lower_bounds[bounded])),
        )


def _rows(
    lhs: ArrayLike | None, rhs: ArrayLike | None, n: int, what: str
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    if lhs is None:
        return np.zeros((0, n)), np.zeros(0)

    matrix = np.atleast_2d(np.asarray(lhs, dtype=float))
    vector = np.atleast_1d(np.asarray(rhs, dtype=float))
    if matrix.shape[1] != n or len(vector) != matrix.shape[0]:
        raise ShapeError(f"Inconsistent {what} constraint shapes.")

    return matrix, vector


@dataclass(slots=True)
class QpSolution:
    x: NDArray[np.float64]
    objective: float
    iterations: int
    kkt_residual: float
    active: tuple[int, ...]
    multipliers: NDArray[np.float64]
    objective_trace: list[float] = field(default_factory=list)


################################


def solve_simplex_qp(q: ArrayLike, c: ArrayLike) -> NDArray[np.float64]:
    """
    Description
    -----------
    Minimize w'qw - 2w'c over the probability simplex.

    """
    linear = np.atleast_1d(np.asarray(c, dtype=float))
    n: Final = len(linear)
    if n == 1:
        return np.ones(1)

    problem = QpProblem(
        q=q,
        c=linear,
        eq_lhs=np.ones((1, n)),
        eq_rhs=np.ones(1),
        lower_bounds=np.zeros(n),
        start=np.full(n, 1 / n),
    )
    w = np.maximum(solve(problem).x, 0.0)
    return w / w.sum()


def solve_general_qp(problem: QpProblem) -> NDArray[np.float64]:
    return solve(problem).x


def solve(problem: QpProblem) -> QpSolution:
    """
    Description
    -----------
    Primal active-set method. Each iteration solves the equality-constrained
    subproblem on the working set; blocked steps add the lowest-index blocking
    constraint, and stationary points drop the working constraint with the most
    negative multiplier (lowest index on ties).

    Raises
    ------
    FeasibilityError
        If the constraints admit no point.
    SolverError
        If the iteration cap is reached or the final KKT residual exceeds
        KKT_TOLERANCE.

    """
    n: Final = problem.n
    eq_lhs, eq_rhs = _independent_equalities(problem.eq_lhs, problem.eq_rhs)
    g_rows, h_rows = problem.inequality_rows()
    hessian: Final = 2 * problem.q

    x = _feasible_start(problem, eq_lhs, eq_rhs, g_rows, h_rows)
    scale = max(1.0, float(np.max(np.abs(hessian))), 2 * float(np.max(np.abs(problem.c))))

    working: list[int] = []
    trace: list[float] = [problem.objective(x)]
    max_iterations: Final = (
        ITERATIONS_PER_VARIABLE * max(n, 1)
        if problem.max_iterations is None
        else problem.max_iterations
    )

    for iteration in range(1, max_iterations + 1):
        gradient = hessian @ x - 2 * problem.c
        active_rows = np.vstack((eq_lhs, g_rows[working]))
        step, multipliers = _kkt_step(hessian, gradient, active_rows)

        if np.max(np.abs(step), initial=0.0) <= 1e-12 * max(1.0, np.max(np.abs(x))):
            bound_multipliers = multipliers[len(eq_rhs) :]
            if len(working) == 0 or bound_multipliers.min() >= -1e-10 * scale:
                return _finish(problem, x, working, iteration, trace, eq_lhs, eq_rhs)

            working.pop(int(np.argmin(bound_multipliers)))
            continue

        alpha, blocking = _ratio_test(x, step, g_rows, h_rows, working)
        x = x + alpha * step
        if blocking is not None:
            working.append(blocking)
            working.sort()

        trace.append(problem.objective(x))

    residual = _kkt_residual(problem, x, working, eq_lhs, eq_rhs)[0]
    raise SolverError(f"Active-set QP did not converge in {max_iterations} pivots", residual)


################################


def _independent_equalities(
    lhs: NDArray[np.float64], rhs: NDArray[np.float64]
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """
    Description
    -----------
    Replace the equality system by an orthonormal basis of its row space, detecting
    inconsistent systems on the way.

    """
    n = lhs.shape[1]
    if len(rhs) == 0:
        return lhs, rhs

    augmented = np.column_stack((lhs, rhs))
    _, singular, vt = np.linalg.svd(augmented, full_matrices=False)
    if singular[0] == 0:
        return np.zeros((0, n)), np.zeros(0)

    tol = max(augmented.shape) * np.finfo(float).eps * singular[0]
    rank = int(np.sum(singular > tol))
    if rank > np.linalg.matrix_rank(lhs, tol=tol):
        raise FeasibilityError("Equality constraints are inconsistent.")

    return vt[:rank, :n], vt[:rank, n]


def _feasible_start(
    problem: QpProblem,
    eq_lhs: NDArray[np.float64],
    eq_rhs: NDArray[np.float64],
    g_rows: NDArray[np.float64],
    h_rows: NDArray[np.float64],
) -> NDArray[np.float64]:
    n = problem.n

    if problem.start is not None:
        x = problem.start
    elif len(h_rows) == 0:
        x = np.linalg.lstsq(eq_lhs, eq_rhs, rcond=None)[0] if len(eq_rhs) else np.zeros(n)
    else:
        phase_one = linprog(
            np.zeros(n),
            A_ub=-g_rows,
            b_ub=-h_rows,
            A_eq=eq_lhs if len(eq_rhs) else None,
            b_eq=eq_rhs if len(eq_rhs) else None,
            bounds=[(None, None)] * n,
            method="highs",
        )
        if phase_one.status != 0:
            raise FeasibilityError(f"No feasible point: {phase_one.message}")
        x = phase_one.x

    violation = max(
        np.max(np.abs(eq_lhs @ x - eq_rhs), initial=0.0),
        np.max(h_rows - g_rows @ x, initial=0.0),
    )
    if violation > FEASIBILITY_TOLERANCE:
        raise FeasibilityError(f"Start point violates constraints by {violation:.3e}.")

    return np.array(x, dtype=float)


def _kkt_step(
    hessian: NDArray[np.float64],
    gradient: NDArray[np.float64],
    active_rows: NDArray[np.float64],
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    n, k = len(gradient), len(active_rows)

    system = np.zeros((n + k, n + k))
    system[:n, :n] = hessian
    system[:n, n:] = -active_rows.T
    system[n:, :n] = active_rows
    rhs = np.concatenate((-gradient, np.zeros(k)))

    try:
        solution = np.linalg.solve(system, rhs)
        if not np.all(np.isfinite(solution)):
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        # Degenerate working set: dependent rows or zero curvature.
        solution = np.linalg.lstsq(system, rhs, rcond=None)[0]

    return solution[:n], solution[n:]


def _ratio_test(
    x: NDArray[np.float64],
    step: NDArray[np.float64],
    g_rows: NDArray[np.float64],
    h_rows: NDArray[np.float64],
    working: list[int],
) -> tuple[float, int | None]:
    if len(h_rows) == 0:
        return 1.0, None

    rate = g_rows @ step
    slack = np.maximum(g_rows @ x - h_rows, 0.0)

    candidates = rate < -1e-14 * max(1.0, float(np.max(np.abs(step))))
    candidates[working] = False
    if not np.any(candidates):
        return 1.0, None

    ratios = np.full(len(h_rows), np.inf)
    ratios[candidates] = slack[candidates] / -rate[candidates]

    alpha = float(ratios.min())
    if alpha >= 1.0:
        return 1.0, None

    # Ties resolve to the lowest index.
    blocking = int(np.flatnonzero(ratios <= alpha + 1e-15)[0])
    return alpha, blocking


def _kkt_residual(
    problem: QpProblem,
    x: NDArray[np.float64],
    working: list[int],
    eq_lhs: NDArray[np.float64],
    eq_rhs: NDArray[np.float64],
) -> tuple[float, NDArray[np.float64]]:
    g_rows, h_rows = problem.inequality_rows()
    gradient = 2 * problem.q @ x - 2 * problem.c
    active_rows = np.vstack((eq_lhs, g_rows[working]))

    if len(active_rows):
        multipliers = np.linalg.lstsq(active_rows.T, gradient, rcond=None)[0]
    else:
        multipliers = np.zeros(0)

    scale = max(1.0, float(np.max(np.abs(gradient))), 2 * float(np.max(np.abs(problem.c))))
    bound_multipliers = multipliers[len(eq_rhs) :]

    stationarity = np.max(np.abs(gradient - active_rows.T @ multipliers), initial=0.0)
    primal = max(
        np.max(np.abs(eq_lhs @ x - eq_rhs), initial=0.0),
        np.max(h_rows - g_rows @ x, initial=0.0),
    )
    dual = np.max(-bound_multipliers, initial=0.0)
    complementarity = np.max(
        np.abs(bound_multipliers * (g_rows[working] @ x - h_rows[working])), initial=0.0
    )

    residual = max(stationarity / scale, primal, dual / scale, complementarity / scale)
    return float(residual), multipliers


def _finish(
    problem: QpProblem,
    x: NDArray[np.float64],
    working: list[int],
    iterations: int,
    trace: list[float],
    eq_lhs: NDArray[np.float64],
    eq_rhs: NDArray[np.float64],
) -> QpSolution:
    residual, multipliers = _kkt_residual(problem, x, working, eq_lhs, eq_rhs)
    if residual > KKT_TOLERANCE:
        message = f"Active-set QP stopped off optimality after {iterations} pivots"
        raise SolverError(message, residual)

    logger.debug("QP solved in %d iterations, %d active.", iterations, len(working))
    return QpSolution(
        x=x,
        objective=problem.objective(x),
        iterations=iterations,
        kkt_residual=residual,
        active=tuple(working),
        multipliers=multipliers,
        objective_trace=trace,
    )
