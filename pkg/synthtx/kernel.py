import sys
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Final, Iterator

if sys.version_info >= (3, 11):
    from typing import Self
else:
    from typing_extensions import Self

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.linalg import cho_solve
from scipy.spatial.distance import cdist, pdist

from synthtx.errors import ConfigError, DegenerateDataError, DomainError, ShapeError
from synthtx.linalg import spd_factor, symmetrize

logger = logging.getLogger(__name__)

DEFAULT_LAMBDA: Final[float] = 0.01
EXACT_PAIR_LIMIT: Final[int] = 12_500_000
PAIR_BLOCK_ROWS: Final[int] = 256
PAIR_HISTOGRAM_BINS: Final[int] = 4096
PAIR_SELECT_LIMIT: Final[int] = 1_000_000


class BandwidthRule(Enum):
    FIXED = "fixed"
    MEDIAN_HEURISTIC = "median-heuristic"


def as_points(values: ArrayLike) -> NDArray[np.float64]:
    """
    Description
    -----------
    Coerce covariates to an (n, d) array. A flat sequence is read as n scalar
    covariates.

    """
    points = np.asarray(values, dtype=float)
    match points.ndim:
        case 0:
            return points.reshape(1, 1)
        case 1:
            return points.reshape(-1, 1)
        case 2:
            return points
        case _:
            raise ShapeError(f"Covariates must be at most 2-D, got {points.ndim}-D.")


################################


def gaussian_kernel(u: ArrayLike, v: ArrayLike, h: float) -> float:
    a = np.atleast_1d(np.asarray(u, dtype=float))
    b = np.atleast_1d(np.asarray(v, dtype=float))

    if a.shape != b.shape:
        raise ShapeError(f"Kernel arguments differ in shape: {a.shape} vs {b.shape}.")
    if not h > 0:
        raise DomainError(f"Kernel bandwidth must be positive, got {h}.")

    return float(np.exp(-np.sum((a - b) ** 2) / (2 * h**2)))


def gram_matrix(a: ArrayLike, b: ArrayLike, h: float) -> NDArray[np.float64]:
    """
    Description
    -----------
    Gaussian kernel matrix between the rows of `a` and the rows of `b`.

    """
    pa, pb = as_points(a), as_points(b)
    if pa.shape[1] != pb.shape[1]:
        raise ShapeError(f"Point dimensions differ: {pa.shape[1]} vs {pb.shape[1]}.")
    if not h > 0:
        raise DomainError(f"Kernel bandwidth must be positive, got {h}.")

    return np.exp(-cdist(pa, pb, metric="sqeuclidean") / (2 * h**2))


def median_heuristic(points: ArrayLike, max_pairs: int = EXACT_PAIR_LIMIT) -> float:
    """
    Description
    -----------
    Median of the pairwise Euclidean distances over all unordered pairs. Up to
    `max_pairs` pairs are held at once; larger samples use an exact selection over
    row blocks of the distance matrix.

    Raises
    ------
    DegenerateDataError
        If every point is identical.

    """
    data = as_points(points)
    n = len(data)
    if n < 2:
        raise DegenerateDataError("Median heuristic needs at least two points.")
    if not np.any(np.ptp(data, axis=0) > 0):
        raise DegenerateDataError("Median heuristic on identical points.")

    if n * (n - 1) // 2 <= max_pairs:
        distances = pdist(data, metric="euclidean")
        median = float(np.median(distances))
        if median > 0:
            return median

        # Mostly duplicated points: fall back to the median of the distinct pairs.
        return float(np.median(distances[distances > 0]))

    pairs = n * (n - 1) // 2
    zeros = sum(int(np.count_nonzero(block == 0)) for block in _pair_blocks(data))
    if zeros <= pairs // 2:
        count, positive = pairs, False
    else:
        count, positive = pairs - zeros, True

    lower = _pair_order_statistic(data, (count - 1) // 2, positive)
    upper = lower if count % 2 else _pair_order_statistic(data, count // 2, positive)
    return float((np.sqrt(lower) + np.sqrt(upper)) / 2)


def _pair_blocks(data: NDArray[np.float64]) -> Iterator[NDArray[np.float64]]:
    """
    Description
    -----------
    Squared distances of every unordered pair, one block of rows at a time.

    """
    n = len(data)
    for start in range(0, n - 1, PAIR_BLOCK_ROWS):
        stop = min(start + PAIR_BLOCK_ROWS, n)
        block = cdist(data[start:stop], data[start:], metric="sqeuclidean")
        upper = np.arange(n - start)[None, :] > np.arange(stop - start)[:, None]
        yield block[upper]


def _pair_order_statistic(data: NDArray[np.float64], k: int, positive: bool) -> float:
    """
    Description
    -----------
    The k-th smallest (0-based) squared pairwise distance, among the positive ones
    only when `positive` is set. Narrows a closed bracket with histograms over the
    pair blocks until the bin holding rank k is small enough to select from, or
    holds a single repeated value.

    """
    # Squared diameter of the bounding box, padded against rounding in cdist.
    lo, hi = 0.0, float(np.sum(np.ptp(data, axis=0) ** 2)) * (1 + 1e-9)
    below = 0

    while True:
        edges = np.linspace(lo, hi, PAIR_HISTOGRAM_BINS + 1)
        counts = np.zeros(PAIR_HISTOGRAM_BINS, dtype=np.int64)
        for values in _pair_blocks(data):
            kept = values[_in_range(values, lo, hi, True, positive)]
            counts += np.bincount(
                np.searchsorted(edges[1:-1], kept, side="right"), minlength=PAIR_HISTOGRAM_BINS
            )

        cumulative = np.cumsum(counts)
        b = min(int(np.searchsorted(cumulative, k - below, side="right")), len(counts) - 1)
        below += int(cumulative[b - 1]) if b else 0
        bin_lo, bin_hi = float(edges[b]), float(edges[b + 1])
        last = b == PAIR_HISTOGRAM_BINS - 1

        def in_bin(values: NDArray[np.float64]) -> NDArray[np.float64]:
            return values[_in_range(values, bin_lo, bin_hi, last, positive)]

        if counts[b] <= PAIR_SELECT_LIMIT:
            chosen = np.concatenate([in_bin(v) for v in _pair_blocks(data)])
            rank = k - below
            return float(np.partition(chosen, rank)[rank])

        lo, hi = np.inf, -np.inf
        for values in _pair_blocks(data):
            selected = in_bin(values)
            if len(selected):
                lo, hi = min(lo, float(selected.min())), max(hi, float(selected.max()))
        if lo == hi:
            return lo


def _in_range(
    values: NDArray[np.float64], lo: float, hi: float, closed: bool, positive: bool
) -> NDArray[np.bool_]:
    inside = (values >= lo) & ((values <= hi) if closed else (values < hi))
    if positive:
        inside &= values > 0
    return inside


################################


@dataclass(slots=True, frozen=True)
class KernelConfig:
    bandwidth_x: float
    bandwidth_y: float
    lam: float = DEFAULT_LAMBDA
    bandwidth_rule: BandwidthRule = BandwidthRule.FIXED

    def __post_init__(self) -> None:
        if not self.bandwidth_x > 0:
            raise ConfigError(f"bandwidth_x must be positive, got {self.bandwidth_x}.")
        if not self.bandwidth_y > 0:
            raise ConfigError(f"bandwidth_y must be positive, got {self.bandwidth_y}.")
        if not self.lam > 0:
            raise ConfigError(f"lambda must be positive, got {self.lam}.")

    @classmethod
    def from_data(
        cls, covariates: ArrayLike, outcomes: ArrayLike, lam: float = DEFAULT_LAMBDA
    ) -> Self:
        """
        Description
        -----------
        Median-heuristic bandwidths over pooled covariates and pooled control
        outcomes. One outcome bandwidth is shared so every cross Gram lives in one
        RKHS.

        """
        config = cls(
            bandwidth_x=median_heuristic(covariates),
            bandwidth_y=median_heuristic(outcomes),
            lam=lam,
            bandwidth_rule=BandwidthRule.MEDIAN_HEURISTIC,
        )
        logger.debug(
            "Median heuristic bandwidths: x=%.6g, y=%.6g",
            config.bandwidth_x,
            config.bandwidth_y,
        )
        return config

    def as_dict(self) -> dict[str, float | str]:
        return {
            "bandwidth_x": self.bandwidth_x,
            "bandwidth_y": self.bandwidth_y,
            "lambda": self.lam,
            "bandwidth_rule": self.bandwidth_rule.value,
        }


@dataclass(slots=True, frozen=True)
class CmeModel:
    population_id: int
    train_x: NDArray[np.float64]
    train_y: NDArray[np.float64]
    m_inv: NDArray[np.float64]
    config: KernelConfig

    @property
    def n(self) -> int:
        return len(self.train_y)

    @property
    def dim(self) -> int:
        return self.train_x.shape[1]


def fit_cme(
    pop_id: int, x: ArrayLike, y: ArrayLike, config: KernelConfig
) -> CmeModel:
    """
    Description
    -----------
    Regularized conditional mean embedding of Y given X for one population:
    stores M = (K + lambda I)^-1 for the covariate Gram K.

    """
    train_x = as_points(x).copy()
    train_y = np.array(y, dtype=float).ravel()

    if len(train_y) < 1:
        raise ShapeError(f"Population {pop_id} has no control observations.")
    if len(train_x) != len(train_y):
        raise ShapeError(
            f"Population {pop_id}: {len(train_x)} covariates vs {len(train_y)} outcomes."
        )

    n: Final = len(train_y)
    regularized = gram_matrix(train_x, train_x, config.bandwidth_x)
    regularized[np.diag_indices(n)] += config.lam

    factor = spd_factor(regularized, f"regularized Gram of population {pop_id}")
    m_inv = symmetrize(cho_solve(factor, np.eye(n), check_finite=False))

    for array in (train_x, train_y, m_inv):
        array.setflags(write=False)

    logger.debug("Fitted CME for population %d on %d points.", pop_id, n)
    return CmeModel(pop_id, train_x, train_y, m_inv, config)


def embedding_coefficients(model: CmeModel, x: ArrayLike) -> NDArray[np.float64]:
    """
    Description
    -----------
    Coefficients alpha(x) = M k(x) of the embedding mu(x) = sum_u alpha_u l(Y_u, .).

    """
    point = np.atleast_1d(np.asarray(x, dtype=float))
    if point.ndim != 1 or len(point) != model.dim:
        raise ShapeError(f"Expected a covariate of dimension {model.dim}.")

    return embedding_matrix(model, point.reshape(1, -1))[:, 0]


def embedding_matrix(model: CmeModel, xs: ArrayLike) -> NDArray[np.float64]:
    """
    Description
    -----------
    Embedding coefficients for many covariate points at once, one column per point.

    """
    points = as_points(xs)
    if points.shape[1] != model.dim:
        raise ShapeError(f"Expected covariates of dimension {model.dim}.")

    return model.m_inv @ gram_matrix(model.train_x, points, model.config.bandwidth_x)


################################


@dataclass(slots=True)
class OutcomeGramCache:
    """
    Description
    -----------
    Cross outcome Grams keyed by ordered population pair. A cache must only be
    shared between models fitted on the same data.

    """

    grams: dict[tuple[int, int], NDArray[np.float64]] = field(default_factory=dict)

    def get(self, model_i: CmeModel, model_j: CmeModel) -> NDArray[np.float64]:
        key = (model_i.population_id, model_j.population_id)
        if key not in self.grams:
            gram = _outcome_gram(model_i, model_j)
            gram.setflags(write=False)
            self.grams[key] = gram
            self.grams[key[::-1]] = gram.T

        return self.grams[key]


def _outcome_gram(model_i: CmeModel, model_j: CmeModel) -> NDArray[np.float64]:
    if model_i.config.bandwidth_y != model_j.config.bandwidth_y:
        raise ConfigError(
            f"Populations {model_i.population_id} and {model_j.population_id} "
            "use different outcome bandwidths."
        )

    return gram_matrix(model_i.train_y, model_j.train_y, model_i.config.bandwidth_y)


def cross_outcome_gram(
    model_i: CmeModel, model_j: CmeModel, cache: OutcomeGramCache | None = None
) -> NDArray[np.float64]:
    if cache is None:
        return _outcome_gram(model_i, model_j)

    return cache.get(model_i, model_j)
