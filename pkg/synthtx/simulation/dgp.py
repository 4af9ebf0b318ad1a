"""
Mixture data-generating process for synthetic treatment group studies.

Source i draws control outcomes from a mixture of linear-Gaussian components with
logistic mixture coefficients pi_ij(x). The target mixes the sources with
logistic weights w_i(x). Treated outcomes apply one transition mechanism,
g1 y + g2 x + g3 x y + noise, to an intermediate control draw.
"""

import sys
import logging
from dataclasses import dataclass, replace
from typing import Final

if sys.version_info >= (3, 11):
    from typing import Self
else:
    from typing_extensions import Self

import numpy as np
from numpy.random import Generator
from numpy.typing import ArrayLike, NDArray
from scipy.special import softmax
from scipy.stats import norm, truncnorm

from synthtx.dataset import CONTROL, TARGET, TREATED, Dataset
from synthtx.errors import DomainError
from synthtx.estimator import OracleWeights
from synthtx.interval import Interval

logger = logging.getLogger(__name__)

SOURCE_COVARIATES: Final = Interval(-1.0, 3.0)
TARGET_MEAN: Final[float] = 0.0
TARGET_SD: Final[float] = 1.0
COMPONENT_SD: Final[float] = 1.0
HIDDEN_FACTOR: Final[int] = 10
NEGLIGIBLE_MASS: Final[float] = 1e-12

OWN_COMPONENT: Final[float] = float(np.log(0.8))
OTHER_COMPONENT: Final[float] = float(np.log(0.1))


@dataclass(slots=True, frozen=True)
class DgpParams:
    a: NDArray[np.float64]
    b: NDArray[np.float64]
    e: NDArray[np.float64]
    f: NDArray[np.float64]
    c: NDArray[np.float64]
    d: NDArray[np.float64]
    g1: float
    g2: float
    g3: float
    noise_sd: float = 1.0

    def __post_init__(self) -> None:
        if len(self.a) < 1 or len(self.c) < 1:
            raise DomainError("Need at least one mixture component and one source.")
        if self.e.shape != (len(self.c), len(self.a)) or self.f.shape != self.e.shape:
            raise DomainError("Mixture logits must be n_sources x n_components.")

    @property
    def n_components(self) -> int:
        return len(self.a)

    @property
    def n_sources(self) -> int:
        return len(self.c)

    def into_exchangeable(self) -> Self:
        """
        Description
        -----------
        Same parameters with every source sharing one uniform mixture, so every
        population, target included, has the same control law.

        """
        flat = np.zeros_like(self.f)
        return replace(self, e=flat, f=flat.copy())

    def mixture_coefficients(self, x: ArrayLike) -> NDArray[np.float64]:
        """
        Description
        -----------
        pi_ij(x), shaped (points, sources, components).

        """
        xs = _flat(x)
        logits = self.e[None] * xs[:, None, None] + self.f[None]
        return softmax(logits, axis=2)

    def true_weights(self, x: ArrayLike) -> NDArray[np.float64]:
        xs = _flat(x)
        return softmax(self.c[None] * xs[:, None] + self.d[None], axis=1)

    def target_mixture(self, x: ArrayLike) -> NDArray[np.float64]:
        return np.einsum("pi,pij->pj", self.true_weights(x), self.mixture_coefficients(x))

    def population_mixture(self, pop: int, x: ArrayLike) -> NDArray[np.float64]:
        if pop == TARGET:
            return self.target_mixture(x)

        return self.mixture_coefficients(x)[:, pop - 1]

    def component_means(self, x: ArrayLike) -> NDArray[np.float64]:
        return np.outer(_flat(x), self.a) + self.b[None]

    def control_mean(self, pop: int, x: ArrayLike) -> NDArray[np.float64]:
        return np.sum(self.population_mixture(pop, x) * self.component_means(x), axis=1)

    def transition(self, y: ArrayLike, x: ArrayLike) -> NDArray[np.float64]:
        ys, xs = _flat(y), _flat(x)
        return self.g1 * ys + self.g2 * xs + self.g3 * xs * ys

    def treated_mean(self, pop: int, x: ArrayLike) -> NDArray[np.float64]:
        return self.transition(self.control_mean(pop, x), x)

    def oracle_weights(self) -> OracleWeights:
        return OracleWeights(self.n_sources, self.true_weights)

    def as_dict(self) -> dict[str, object]:
        return {
            "a": self.a.tolist(),
            "b": self.b.tolist(),
            "e": self.e.tolist(),
            "f": self.f.tolist(),
            "c": self.c.tolist(),
            "d": self.d.tolist(),
            "g": [self.g1, self.g2, self.g3],
            "noise_sd": self.noise_sd,
        }


@dataclass(slots=True, frozen=True)
class OracleRegression:
    """
    Description
    -----------
    E[Y(1) | X=x, D=pop] under known parameters.

    """

    params: DgpParams
    pop: int

    def predict(self, xs: ArrayLike) -> NDArray[np.float64]:
        return self.params.treated_mean(self.pop, xs)


@dataclass(slots=True, frozen=True)
class StudySizes:
    n_source_treated: int
    n_source_control: int
    n_target: int

    def __post_init__(self) -> None:
        if min(self.n_source_treated, self.n_source_control, self.n_target) < 1:
            raise DomainError("Every sample size must be at least 1.")

    @classmethod
    def uniform(cls, n: int, n_source_treated: int | None = None) -> Self:
        return cls(n if n_source_treated is None else n_source_treated, n, n)


@dataclass(slots=True)
class SimulatedStudy:
    dataset: Dataset
    hidden_target_treated_y: NDArray[np.float64]
    true_theta: float
    params: DgpParams
    seed: int | None = None

    def oracle_regressions(self) -> list[OracleRegression]:
        return [OracleRegression(self.params, i) for i in range(1, self.params.n_sources + 1)]


################################


def draw_params(
    rng: Generator, n_components: int = 3, n_sources: int = 3, noise_sd: float = 1.0
) -> DgpParams:
    """
    Description
    -----------
    a_j, b_j ~ N(0, 15^2); g1, g2, g3 ~ N(0, 10^2); c_i ~ N(0, 1);
    d_i ~ N(0, 1.5^2); e = 0 and f = ln 0.8 on the diagonal, ln 0.1 elsewhere.

    """
    a = rng.normal(0.0, 15.0, n_components)
    b = rng.normal(0.0, 15.0, n_components)
    g1, g2, g3 = rng.normal(0.0, 10.0, 3)
    c = rng.normal(0.0, 1.0, n_sources)
    d = rng.normal(0.0, 1.5, n_sources)

    own = np.eye(n_sources, n_components, dtype=bool)
    f = np.where(own, OWN_COMPONENT, OTHER_COMPONENT)
    e = np.zeros((n_sources, n_components))

    return DgpParams(a, b, e, f, c, d, float(g1), float(g2), float(g3), noise_sd)


def sample_truncated_normal(
    mean: float,
    sd: float,
    lo: float,
    hi: float,
    rng: Generator,
    size: int | None = None,
) -> float | NDArray[np.float64]:
    """
    Description
    -----------
    Inverse-CDF draws from N(mean, sd^2) restricted to [lo, hi].

    Raises
    ------
    DomainError
        Empty interval, nonpositive sd, or probability mass below 1e-12.

    """
    if not lo < hi:
        raise DomainError(f"Truncation bounds must satisfy lo < hi, got [{lo}, {hi}].")
    if not sd > 0:
        raise DomainError(f"Standard deviation must be positive, got {sd}.")

    alpha, beta = (lo - mean) / sd, (hi - mean) / sd
    # Upper-tail intervals lose all precision in the cdf difference.
    mass = max(norm.cdf(beta) - norm.cdf(alpha), norm.sf(alpha) - norm.sf(beta))
    if mass < NEGLIGIBLE_MASS:
        raise DomainError(f"Interval [{lo}, {hi}] has negligible probability mass.")

    u = rng.uniform(size=size)
    draws = truncnorm.ppf(u, alpha, beta, loc=mean, scale=sd)
    return float(draws) if size is None else np.asarray(draws)


def draw_control(
    params: DgpParams, pop: int, x: ArrayLike, rng: Generator
) -> NDArray[np.float64]:
    xs = _flat(x)
    mixture = params.population_mixture(pop, xs)
    cumulative = np.cumsum(mixture, axis=1)

    u = rng.uniform(size=len(xs))
    component = np.minimum((u[:, None] > cumulative).sum(axis=1), params.n_components - 1)
    means = params.component_means(xs)[np.arange(len(xs)), component]

    return means + rng.normal(0.0, COMPONENT_SD, len(xs))


def draw_treated(
    params: DgpParams, pop: int, x: ArrayLike, rng: Generator
) -> NDArray[np.float64]:
    # Each treated unit gets a fresh intermediate control draw.
    xs = _flat(x)
    intermediate = draw_control(params, pop, xs, rng)
    return params.transition(intermediate, xs) + rng.normal(0.0, params.noise_sd, len(xs))


def draw_target_covariates(n: int, rng: Generator) -> NDArray[np.float64]:
    return sample_truncated_normal(
        TARGET_MEAN, TARGET_SD, SOURCE_COVARIATES.lo, SOURCE_COVARIATES.hi, rng, n
    )


def generate_study(
    params: DgpParams, sizes: StudySizes, rng: Generator, seed: int | None = None
) -> SimulatedStudy:
    """
    Description
    -----------
    Observable dataset, hidden treated outcomes for the target rows, and the true
    target treated mean estimated on a fresh hidden sample ten times the target
    size. Blocks are the target controls, then each source's treated and control
    rows.

    """
    target_x = draw_target_covariates(sizes.n_target, rng)
    blocks = [(TARGET, CONTROL, target_x, draw_control(params, TARGET, target_x, rng))]

    for i in range(1, params.n_sources + 1):
        treated_x = rng.uniform(SOURCE_COVARIATES.lo, SOURCE_COVARIATES.hi, sizes.n_source_treated)
        blocks.append((i, TREATED, treated_x, draw_treated(params, i, treated_x, rng)))

        control_x = rng.uniform(SOURCE_COVARIATES.lo, SOURCE_COVARIATES.hi, sizes.n_source_control)
        blocks.append((i, CONTROL, control_x, draw_control(params, i, control_x, rng)))

    hidden_y = draw_treated(params, TARGET, target_x, rng)

    truth_x = draw_target_covariates(HIDDEN_FACTOR * sizes.n_target, rng)
    true_theta = float(np.mean(draw_treated(params, TARGET, truth_x, rng)))

    logger.debug("Generated study with true theta %.6g.", true_theta)
    return SimulatedStudy(Dataset.from_blocks(blocks), hidden_y, true_theta, params, seed)


def _flat(values: ArrayLike) -> NDArray[np.float64]:
    return np.atleast_1d(np.asarray(values, dtype=float)).reshape(-1)
