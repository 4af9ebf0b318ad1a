import logging
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from synthtx.errors import ShapeError, SingularityError, UnderdeterminedError
from synthtx.linalg import spd_solve
from synthtx.sieve.basis import SieveBasis, eval_basis

logger = logging.getLogger(__name__)


@dataclass(slots=True, frozen=True)
class SieveRegressionModel:
    basis: SieveBasis
    beta_g: NDArray[np.float64]
    population_id: int

    def predict(self, xs: ArrayLike) -> NDArray[np.float64]:
        return self.basis.design(xs) @ self.beta_g

    def as_dict(self) -> dict:
        return {
            "population_id": self.population_id,
            "basis": self.basis.as_dict(),
            "beta_g": self.beta_g.tolist(),
        }


def fit_sieve_regression(
    x: ArrayLike, y: ArrayLike, basis: SieveBasis, population_id: int = 0
) -> SieveRegressionModel:
    """
    Description
    -----------
    Least-squares fit of y on the basis functions: solves (Q'Q) beta = Q'y.

    Raises
    ------
    UnderdeterminedError
        Fewer observations than basis functions.
    SingularityError
        Rank-deficient design even after jitter.

    """
    outcomes = np.asarray(y, dtype=float).ravel()
    design = basis.design(x)

    if len(design) != len(outcomes):
        raise ShapeError(
            f"Population {population_id}: {len(design)} covariates vs {len(outcomes)} outcomes."
        )
    if len(outcomes) < basis.dim:
        raise UnderdeterminedError(
            f"Population {population_id} has {len(outcomes)} treated observations "
            f"for a basis of dimension {basis.dim}."
        )

    beta = spd_solve(
        design.T @ design,
        design.T @ outcomes,
        f"regression normal equations of population {population_id}",
        SingularityError,
    )
    if not np.all(np.isfinite(beta)):
        raise SingularityError(
            f"Non-finite regression coefficients for population {population_id}."
        )

    beta.setflags(write=False)
    logger.debug(
        "Fitted sieve regression for population %d on %d points.", population_id, len(outcomes)
    )
    return SieveRegressionModel(basis, beta, population_id)


def eval_regression(model: SieveRegressionModel, x: ArrayLike) -> float:
    return float(eval_basis(model.basis, x) @ model.beta_g)
