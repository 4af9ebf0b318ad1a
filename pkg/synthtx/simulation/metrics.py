from dataclasses import dataclass
from typing import Final, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from synthtx.errors import MetricError
from synthtx.estimator import ConfidenceInterval

DEGENERATE_TRUTH: Final[float] = 1e-8


@dataclass(slots=True, frozen=True)
class MreSummary:
    mean: float
    sd: float
    used: int
    dropped: int

    def as_dict(self) -> dict[str, float | int]:
        return {"mre": self.mean, "sd": self.sd, "used": self.used, "dropped": self.dropped}


def _paired(
    estimates: ArrayLike, truths: ArrayLike
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    est = np.asarray(estimates, dtype=float).ravel()
    tru = np.asarray(truths, dtype=float).ravel()
    if len(est) != len(tru):
        raise MetricError(f"{len(est)} estimates vs {len(tru)} truths.")
    if len(est) == 0:
        raise MetricError("No replicates to summarize.")

    return est, tru


def relative_errors(estimates: ArrayLike, truths: ArrayLike) -> NDArray[np.float64]:
    """
    Description
    -----------
    |estimate - truth| / |truth| for every pair whose truth is not degenerate.

    """
    est, tru = _paired(estimates, truths)
    kept = np.abs(tru) >= DEGENERATE_TRUTH
    return np.abs(est[kept] - tru[kept]) / np.abs(tru[kept])


def mre_summary(estimates: ArrayLike, truths: ArrayLike) -> MreSummary:
    est, _ = _paired(estimates, truths)
    errors = relative_errors(estimates, truths)
    if len(errors) == 0:
        raise MetricError("Every replicate has a degenerate truth.")

    sd = float(np.std(errors, ddof=1)) if len(errors) > 1 else 0.0
    return MreSummary(float(np.mean(errors)), sd, len(errors), len(est) - len(errors))


def mre(estimates: ArrayLike, truths: ArrayLike) -> float:
    return mre_summary(estimates, truths).mean


def coverage(intervals: Sequence[ConfidenceInterval], truths: ArrayLike) -> float:
    tru = np.asarray(truths, dtype=float).ravel()
    if len(intervals) != len(tru):
        raise MetricError(f"{len(intervals)} intervals vs {len(tru)} truths.")
    if len(tru) == 0:
        raise MetricError("No intervals to check.")

    return float(np.mean([ci.contains(t) for ci, t in zip(intervals, tru)]))


def mse(estimates: ArrayLike, truths: ArrayLike) -> float:
    est, tru = _paired(estimates, truths)
    return float(np.mean((est - tru) ** 2))
