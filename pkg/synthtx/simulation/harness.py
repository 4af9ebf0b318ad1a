import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Final

import numpy as np
import pandas as pd

from synthtx.config import RunConfig, worker_count
from synthtx.errors import MetricError
from synthtx.estimator import Method
from synthtx.simulation.metrics import coverage, mre_summary, mse
from synthtx.simulation.replicate import LEVELS, ReplicateRecord, run_replicate
from synthtx.simulation.server import ReplicateServer

logger = logging.getLogger(__name__)

FLOAT_FORMAT: Final[str] = "%.17g"


@dataclass(slots=True)
class MonteCarloResult:
    records: list[ReplicateRecord]
    mre_table: pd.DataFrame
    coverage_table: pd.DataFrame

    def replicate_frame(self) -> pd.DataFrame:
        return pd.DataFrame([r.as_dict() for r in self.records])

    def save(self, out_dir: Path) -> None:
        out_dir.mkdir(parents=True, exist_ok=True)
        self.mre_table.to_csv(out_dir / "mre_table.csv", index=False, float_format=FLOAT_FORMAT)
        self.coverage_table.to_csv(
            out_dir / "coverage_table.csv", index=False, float_format=FLOAT_FORMAT
        )
        self.replicate_frame().to_csv(
            out_dir / "replicates.csv", index=False, float_format=FLOAT_FORMAT
        )


def monte_carlo(config: RunConfig, workers: int | None = None) -> MonteCarloResult:
    """
    Description
    -----------
    Run every (size, replicate) task of the simulation settings and summarize.
    Records are ordered by size then replicate whatever the worker count, so the
    result only depends on the configuration.

    """
    settings = config.simulation
    tasks = [(size, r) for size in settings.sizes for r in range(settings.replicates)]
    workers = worker_count(settings) if workers is None else workers

    logger.info("Running %d replicates on %d workers.", len(tasks), workers)
    if workers <= 1 or len(tasks) == 1:
        results = [(size, r, run_replicate(config, size, r)) for size, r in tasks]
    else:
        server = ReplicateServer.start(config, min(workers, len(tasks)))
        try:
            for size, r in tasks:
                server.submit(size, r)
            results = server.collect(len(tasks))
        except BaseException:
            server.kill()
            raise
        server.stop()

    order = {task: k for k, task in enumerate(tasks)}
    results.sort(key=lambda result: order[(result[0], result[1])])
    records = [record for _, _, batch in results for record in batch]

    mre_table, coverage_table = summarize(records, settings.sizes, settings.methods)
    return MonteCarloResult(records, mre_table, coverage_table)


def summarize(
    records: list[ReplicateRecord], sizes: tuple[int, ...], methods: tuple[str, ...]
) -> tuple[pd.DataFrame, pd.DataFrame]:
    """
    Description
    -----------
    One MRE and MSE row per (size, method), and one coverage row per (size, method, level)
    for methods with intervals. Failed replicates are counted, not summarized.

    """
    mre_rows, coverage_rows = [], []
    for size in sizes:
        for method in methods:
            subset = [r for r in records if r.size == size and r.method == method]
            ok = [r for r in subset if not r.failed]

            row: dict[str, object] = {"size": size, "method": method}
            try:
                summary = mre_summary([r.theta_hat for r in ok], [r.truth for r in ok])
                row |= summary.as_dict()
            except MetricError:
                row |= {"mre": np.nan, "sd": np.nan, "used": 0, "dropped": len(ok)}
            try:
                row["mse"] = mse([r.theta_hat for r in ok], [r.truth for r in ok])
            except MetricError:
                row["mse"] = np.nan
            row["failures"] = len(subset) - len(ok)
            mre_rows.append(row)

            if not Method(method).has_inference:
                continue

            for level in LEVELS:
                with_ci = [
                    (r.interval(level), r.truth) for r in ok if r.interval(level) is not None
                ]
                try:
                    rate = coverage([ci for ci, _ in with_ci], [t for _, t in with_ci])
                except MetricError:
                    rate = np.nan
                coverage_rows.append(
                    {
                        "size": size,
                        "method": method,
                        "level": level,
                        "coverage": rate,
                        "used": len(with_ci),
                    }
                )

    return pd.DataFrame(mre_rows), pd.DataFrame(coverage_rows)
