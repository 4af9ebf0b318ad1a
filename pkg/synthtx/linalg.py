import logging
from typing import Final

import numpy as np
from numpy.typing import NDArray
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from synthtx.errors import NumericError

logger = logging.getLogger(__name__)

JITTER_SCALE: Final[float] = 1e-10

CholeskyFactor = tuple[NDArray[np.float64], bool]


def spd_factor(
    matrix: NDArray[np.float64],
    what: str = "matrix",
    error: type[NumericError] = NumericError,
) -> CholeskyFactor:
    """
    Description
    -----------
    Cholesky factorization of a symmetric positive-definite matrix. On failure the
    factorization is retried once with `1e-10 * trace / n` added to the diagonal.

    Raises
    ------
    error
        If the matrix has non-finite entries or the jittered retry fails too.

    """
    if not np.all(np.isfinite(matrix)):
        raise error(f"Non-finite entries in {what}.")

    try:
        return cho_factor(matrix, lower=True, check_finite=False)
    except LinAlgError:
        pass

    n = matrix.shape[0]
    jitter = JITTER_SCALE * max(float(np.trace(matrix)), np.finfo(float).tiny) / n
    logger.warning("Cholesky of %s failed, retrying with jitter %.3e.", what, jitter)

    try:
        return cho_factor(matrix + jitter * np.eye(n), lower=True, check_finite=False)
    except LinAlgError as exc:
        raise error(f"{what} is not positive definite even after jitter.") from exc


def spd_solve(
    matrix: NDArray[np.float64],
    rhs: NDArray[np.float64],
    what: str = "matrix",
    error: type[NumericError] = NumericError,
) -> NDArray[np.float64]:
    return cho_solve(spd_factor(matrix, what, error), rhs, check_finite=False)


def symmetrize(matrix: NDArray[np.float64]) -> NDArray[np.float64]:
    return (matrix + matrix.T) / 2
