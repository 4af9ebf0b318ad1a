import logging
from dataclasses import asdict, dataclass
from typing import Final

import numpy as np

from synthtx.config import RunConfig
from synthtx.errors import EstimationError
from synthtx.estimator import ConfidenceInterval, Method
from synthtx.inference import normal_interval
from synthtx.simulation.dgp import StudySizes, draw_params, generate_study
from synthtx.study import FittedStudy

logger = logging.getLogger(__name__)

LEVELS: Final[tuple[float, ...]] = (0.95, 0.90)

NAN: Final[float] = float("nan")


@dataclass(slots=True, frozen=True)
class ReplicateRecord:
    size: int
    replicate: int
    method: str
    theta_hat: float
    truth: float
    variance: float = NAN
    ci95_lo: float = NAN
    ci95_hi: float = NAN
    ci90_lo: float = NAN
    ci90_hi: float = NAN
    error: str = ""

    @property
    def failed(self) -> bool:
        return self.error != ""

    def interval(self, level: float) -> ConfidenceInterval | None:
        match level:
            case 0.95:
                lo, hi = self.ci95_lo, self.ci95_hi
            case 0.90:
                lo, hi = self.ci90_lo, self.ci90_hi
            case _:
                raise ValueError(f"No interval recorded at level {level}.")

        return None if np.isnan(lo) else ConfidenceInterval(lo, hi, level)

    def as_dict(self) -> dict[str, object]:
        return asdict(self)


def replicate_rng(master_seed: int, replicate: int) -> np.random.Generator:
    """
    Description
    -----------
    Independent stream for one replicate, a pure function of the master seed and
    the replicate index.

    """
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(replicate,)))


def run_replicate(config: RunConfig, size: int, replicate: int) -> list[ReplicateRecord]:
    """
    Description
    -----------
    Draw parameters and a study for one replicate and estimate it with every
    configured method. Estimation failures become records with an error message.

    """
    settings = config.simulation
    rng = replicate_rng(config.seed, replicate)
    params = draw_params(rng, settings.n_components, settings.n_sources, settings.noise_sd)
    if settings.exchangeable:
        params = params.into_exchangeable()

    truth = NAN
    try:
        sizes = StudySizes.uniform(size, settings.n_source_treated)
        study = generate_study(params, sizes, rng, replicate)
        truth = study.true_theta
        fitted = FittedStudy.new(study.dataset, config)
    except EstimationError as exc:
        logger.warning("Replicate %d (n=%d) failed to fit: %s", replicate, size, exc)
        return failure_records(settings.methods, size, replicate, str(exc), truth)

    records = []
    for name in settings.methods:
        try:
            report = fitted.estimate(Method(name), 1 - LEVELS[0])
        except EstimationError as exc:
            logger.warning("Replicate %d (n=%d) %s failed: %s", replicate, size, name, exc)
            records.append(ReplicateRecord(size, replicate, name, NAN, truth, error=str(exc)))
            continue

        if report.variance is None or report.ci is None:
            records.append(ReplicateRecord(size, replicate, name, report.theta_hat, truth))
            continue

        ci90 = normal_interval(report.theta_hat, report.variance, report.n_total, 1 - LEVELS[1])
        records.append(
            ReplicateRecord(
                size,
                replicate,
                name,
                report.theta_hat,
                truth,
                report.variance,
                report.ci.lo,
                report.ci.hi,
                ci90.lo,
                ci90.hi,
            )
        )

    return records


def failure_records(
    methods: tuple[str, ...], size: int, replicate: int, error: str, truth: float = NAN
) -> list[ReplicateRecord]:
    return [ReplicateRecord(size, replicate, m, NAN, truth, error=error) for m in methods]
