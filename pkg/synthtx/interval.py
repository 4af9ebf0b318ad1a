import sys
from dataclasses import dataclass

if sys.version_info >= (3, 11):
    from typing import Self
else:
    from typing_extensions import Self

import numpy as np
from numpy.typing import ArrayLike, NDArray

from synthtx.errors import DomainError


@dataclass(slots=True, frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self) -> None:
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)) or self.hi <= self.lo:
            raise DomainError(f"Invalid interval [{self.lo}, {self.hi}].")

    @classmethod
    def from_sample(cls, values: ArrayLike, margin: float = 0.01) -> Self:
        """
        Description
        -----------
        Smallest interval holding every value, widened by `margin` times its width on
        each side.

        """
        data = np.asarray(values, dtype=float).ravel()
        lo, hi = float(np.min(data)), float(np.max(data))
        if hi <= lo:
            raise DomainError("Cannot build an interval from a single distinct value.")

        pad = margin * (hi - lo)
        return cls(lo - pad, hi + pad)

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def center(self) -> float:
        return self.lo + self.width / 2

    def contains(self, x: ArrayLike) -> NDArray[np.bool_]:
        values = np.asarray(x, dtype=float)
        return (values >= self.lo) & (values <= self.hi)

    def clamp(self, x: ArrayLike) -> NDArray[np.float64]:
        return np.clip(np.asarray(x, dtype=float), self.lo, self.hi)

    def linspace(self, steps: int) -> NDArray[np.float64]:
        return np.linspace(self.lo, self.hi, steps)

    def as_dict(self) -> dict[str, float]:
        return {"lo": self.lo, "hi": self.hi}
