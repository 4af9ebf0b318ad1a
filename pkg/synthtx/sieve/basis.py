import sys
from dataclasses import dataclass
from typing import Protocol, Sequence

if sys.version_info >= (3, 11):
    from typing import Self
else:
    from typing_extensions import Self

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.interpolate import BSpline

from synthtx.errors import ConfigError, ShapeError
from synthtx.interval import Interval
from synthtx.kernel import as_points


class SieveBasis(Protocol):
    @property
    def dim(self) -> int: ...

    def design(self, xs: ArrayLike) -> NDArray[np.float64]: ...

    def count_outside(self, xs: ArrayLike) -> int: ...

    def as_dict(self) -> dict: ...


@dataclass(slots=True, frozen=True)
class BSplineBasis:
    """
    Description
    -----------
    Clamped B-spline basis on a closed interval. `order` is the polynomial order
    (degree + 1); the basis has order + len(interior_knots) functions which are
    nonnegative and sum to one everywhere on the domain.

    """

    order: int
    interior_knots: tuple[float, ...]
    domain: Interval

    def __post_init__(self) -> None:
        if self.order < 1:
            raise ConfigError(f"B-spline order must be at least 1, got {self.order}.")

        knots = np.asarray(self.interior_knots, dtype=float)
        if np.any(np.diff(knots) <= 0):
            raise ConfigError("Interior knots must be strictly increasing.")
        if len(knots) and (knots[0] <= self.domain.lo or knots[-1] >= self.domain.hi):
            raise ConfigError("Interior knots must lie strictly inside the domain.")

    @classmethod
    def from_sample(
        cls, xs: ArrayLike, order: int, n_interior_knots: int, margin: float = 0.01
    ) -> Self:
        """
        Description
        -----------
        Domain from the sample range widened by `margin` on each side; interior
        knots at equally spaced quantiles of the sample.

        """
        values = np.asarray(xs, dtype=float).ravel()
        domain = Interval.from_sample(values, margin)

        levels = np.arange(1, n_interior_knots + 1) / (n_interior_knots + 1)
        knots = np.unique(np.quantile(values, levels)) if n_interior_knots else []

        return cls(order, tuple(float(k) for k in knots), domain)

    @property
    def dim(self) -> int:
        return self.order + len(self.interior_knots)

    @property
    def knots(self) -> NDArray[np.float64]:
        return np.concatenate(
            (
                np.full(self.order, self.domain.lo),
                self.interior_knots,
                np.full(self.order, self.domain.hi),
            )
        )

    def design(self, xs: ArrayLike) -> NDArray[np.float64]:
        """
        Description
        -----------
        Basis values at each point, one row per point. Points outside the domain
        are clamped to its endpoints.

        """
        values = _scalar_points(xs)
        spline = BSpline(self.knots, np.eye(self.dim), self.order - 1, extrapolate=True)
        return np.atleast_2d(spline(self.domain.clamp(values)))

    def count_outside(self, xs: ArrayLike) -> int:
        return int(np.sum(~self.domain.contains(_scalar_points(xs))))

    def as_dict(self) -> dict:
        return {
            "order": self.order,
            "interior_knots": list(self.interior_knots),
            "domain": self.domain.as_dict(),
        }


@dataclass(slots=True, frozen=True)
class AdditiveBasis:
    """
    Description
    -----------
    Intercept plus one B-spline basis per covariate coordinate, each without its
    first function so the columns stay linearly independent.

    """

    components: tuple[BSplineBasis, ...]

    @classmethod
    def from_sample(
        cls, xs: ArrayLike, order: int, n_interior_knots: int, margin: float = 0.01
    ) -> Self:
        points = as_points(xs)
        return cls(
            tuple(
                BSplineBasis.from_sample(points[:, k], order, n_interior_knots, margin)
                for k in range(points.shape[1])
            )
        )

    @property
    def dim(self) -> int:
        return 1 + sum(basis.dim - 1 for basis in self.components)

    def design(self, xs: ArrayLike) -> NDArray[np.float64]:
        points = _matching_points(xs, len(self.components))
        columns = [np.ones((len(points), 1))]
        columns += [b.design(points[:, k])[:, 1:] for k, b in enumerate(self.components)]
        return np.hstack(columns)

    def count_outside(self, xs: ArrayLike) -> int:
        points = _matching_points(xs, len(self.components))
        inside = np.all(
            [b.domain.contains(points[:, k]) for k, b in enumerate(self.components)],
            axis=0,
        )
        return int(np.sum(~inside))

    def as_dict(self) -> dict:
        return {"additive": [b.as_dict() for b in self.components]}


def _scalar_points(xs: ArrayLike) -> NDArray[np.float64]:
    points = as_points(xs)
    if points.shape[1] != 1:
        raise ShapeError(
            f"B-spline basis takes scalar covariates, got dimension {points.shape[1]}."
        )

    return points[:, 0]


def _matching_points(xs: ArrayLike, dim: int) -> NDArray[np.float64]:
    points = as_points(xs)
    if points.shape[1] != dim:
        raise ShapeError(f"Expected covariates of dimension {dim}, got {points.shape[1]}.")

    return points


################################


def eval_basis(basis: SieveBasis, x: ArrayLike) -> NDArray[np.float64]:
    return basis.design(np.atleast_1d(np.asarray(x, dtype=float)).reshape(1, -1))[0]


def build_block_design(bases: Sequence[SieveBasis], x: ArrayLike) -> NDArray[np.float64]:
    """
    Description
    -----------
    V(x) = diag(P_1(x), ..., P_N(x)): a (sum s_i) x N matrix with P_i(x) in the
    rows of block i of column i.

    """
    columns = [eval_basis(basis, x) for basis in bases]
    design = np.zeros((sum(len(c) for c in columns), len(columns)))

    beg = 0
    for i, column in enumerate(columns):
        design[beg : beg + len(column), i] = column
        beg += len(column)

    return design


def block_offsets(bases: Sequence[SieveBasis]) -> list[slice]:
    offsets, beg = [], 0
    for basis in bases:
        offsets.append(slice(beg, beg + basis.dim))
        beg += basis.dim

    return offsets
