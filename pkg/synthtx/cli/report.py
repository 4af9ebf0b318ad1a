import json
from pathlib import Path
from typing import Final

import numpy as np
import pandas as pd

from synthtx.config import REPORT_CONFIG_KEY, RunConfig
from synthtx.estimator import EstimateReport
from synthtx.simulation import SimulatedStudy
from synthtx.study import WeightCurves

FLOAT_FORMAT: Final[str] = "%.17g"
MISSING: Final[str] = "NA"


def format_value(value: object) -> str:
    match value:
        case None:
            return MISSING
        case bool():
            return str(value).lower()
        case float() | np.floating():
            return format(float(value), ".17g")
        case int() | str():
            return str(value)
        case _:
            return json.dumps(value, sort_keys=True, default=float)


def report_lines(report: EstimateReport, config: RunConfig) -> list[str]:
    """
    Description
    -----------
    Flat key=value lines: the estimate, its interval, sorted diagnostics and the
    resolved configuration as one JSON line.

    """
    ci = report.ci
    fields: list[tuple[str, object]] = [
        ("method", report.method.value),
        ("theta_hat", report.theta_hat),
        ("ate_hat", report.ate_hat),
        ("variance", report.variance),
        ("ci_lo", None if ci is None else ci.lo),
        ("ci_hi", None if ci is None else ci.hi),
        ("ci_level", None if ci is None else ci.level),
        ("n_total", report.n_total),
    ]
    fields += [(f"diag.{k}", v) for k, v in sorted(report.diagnostics.items())]

    lines = [f"{key}={format_value(value)}" for key, value in fields]
    lines.append(f"{REPORT_CONFIG_KEY}={config.as_json()}")
    return lines


def write_report(report: EstimateReport, config: RunConfig, path: Path) -> None:
    path.write_text("\n".join(report_lines(report, config)) + "\n", encoding="utf-8")


def write_error_report(error: Exception, config: RunConfig, path: Path) -> None:
    lines = [
        f"error={type(error).__name__}",
        f"message={str(error).replace(chr(10), ' ')}",
        f"{REPORT_CONFIG_KEY}={config.as_json()}",
    ]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_curves(curves: WeightCurves, out_dir: Path) -> None:
    frames = []
    for method, weights in curves.weights.items():
        frame = pd.DataFrame(weights, columns=[f"w_{i + 1}" for i in range(weights.shape[1])])
        frame.insert(0, "x", curves.xs)
        frame.insert(0, "method", method)
        frames.append(frame)
    pd.concat(frames).to_csv(out_dir / "weights.csv", index=False, float_format=FLOAT_FORMAT)

    cmmd = pd.DataFrame({"x": curves.xs} | {f"d_{k}": v for k, v in curves.cmmd.items()})
    cmmd.to_csv(out_dir / "cmmd.csv", index=False, float_format=FLOAT_FORMAT)


def write_simulated(study: SimulatedStudy, out_dir: Path) -> None:
    study.dataset.save(out_dir / "dataset.csv")

    lines = [
        f"true_theta={format_value(study.true_theta)}",
        f"hidden_target_mean={format_value(float(np.mean(study.hidden_target_treated_y)))}",
        f"seed={format_value(study.seed)}",
        f"params={format_value(study.params.as_dict())}",
    ]
    (out_dir / "truth.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
