import argparse
import logging
import sys
from pathlib import Path
from typing import Final, Sequence

import numpy as np

from synthtx.cli.report import write_curves, write_error_report, write_report, write_simulated
from synthtx.config import RunConfig
from synthtx.dataset import Dataset, load_dataset
from synthtx.errors import ConfigError, SynthtxError
from synthtx.estimator import Method
from synthtx.interval import Interval
from synthtx.simulation import StudySizes, draw_params, generate_study, monte_carlo
from synthtx.study import FittedStudy

logger = logging.getLogger(__name__)

LOG_FORMAT: Final[str] = "%(asctime)s %(levelname)s %(name)s: %(message)s"
COMMANDS: Final[tuple[str, ...]] = ("estimate", "curves", "simulate", "mc", "validate")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="synthtx",
        description="Synthetic treatment group estimation for a control-only target population.",
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", type=Path, help="JSON run configuration")
    parser.add_argument(
        "--from-report", type=Path, help="reuse the configuration embedded in a report"
    )
    parser.add_argument("--input", help="dataset CSV with header pop,arm,y,x1..xd")
    parser.add_argument("--method", choices=[m.value for m in Method])
    parser.add_argument("--alpha", type=float, help="1 - confidence level")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--out-dir", dest="out_dir")
    parser.add_argument(
        "--paper-scale", action="store_true", help="n=4000 per group, 100 replicates"
    )
    parser.add_argument("--grid", nargs=3, metavar=("LO", "HI", "STEPS"), help="curve grid")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    return parser


class App:
    def __init__(self, args: argparse.Namespace) -> None:
        self._args: Final = args
        self.config: RunConfig = self._resolve_config()
        self.out_dir: Final = Path(self.config.out_dir)
        self.grid: Final = self._resolve_grid()

    def _resolve_config(self) -> RunConfig:
        args = self._args
        if args.from_report is not None:
            config = RunConfig.from_report(args.from_report)
        elif args.config is not None:
            config = RunConfig.from_json(args.config)
        else:
            config = RunConfig()

        return config.with_overrides(
            method=args.method,
            alpha=args.alpha,
            seed=args.seed,
            input=args.input,
            out_dir=args.out_dir,
            full_scale=args.paper_scale,
        )

    def _resolve_grid(self) -> tuple[Interval | None, int]:
        if self._args.grid is None:
            return None, 101

        lo, hi, count = self._args.grid
        try:
            grid, steps = Interval(float(lo), float(hi)), int(count)
        except ValueError as exc:
            raise ConfigError(f"Invalid --grid {lo} {hi} {count}: {exc}") from exc

        if steps < 2:
            raise ConfigError(f"--grid needs at least 2 steps, got {steps}.")
        return grid, steps

    def run(self) -> int:
        self.out_dir.mkdir(parents=True, exist_ok=True)

        match self._args.command:
            case "estimate":
                return self.estimate()
            case "curves":
                return self.curves()
            case "simulate":
                return self.simulate()
            case "mc":
                return self.monte_carlo()
            case "validate":
                return self.validate()
            case _:
                raise ConfigError(f"Unknown command {self._args.command}.")

    def _load(self) -> Dataset:
        if self.config.input is None:
            raise ConfigError("No input dataset; pass --input or set it in the config.")

        return load_dataset(
            Path(self.config.input), self.config.asinh_columns, self.config.standardize
        )

    def _fit(self) -> FittedStudy:
        return FittedStudy.new(self._load(), self.config)

    def estimate(self) -> int:
        path = self.out_dir / "report.txt"
        try:
            report = self._fit().estimate(self.config.method_enum, self.config.alpha)
        except (SynthtxError, FileNotFoundError) as exc:
            logger.error("Estimation failed: %s", exc)
            write_error_report(exc, self.config, path)
            return 1

        write_report(report, self.config, path)
        print(
            f"{report.method.value}: theta_hat={report.theta_hat:.6g} ate_hat={report.ate_hat:.6g}"
        )
        return 0

    def curves(self) -> int:
        try:
            curves = self._fit().curves(*self.grid)
        except (SynthtxError, FileNotFoundError) as exc:
            logger.error("Curves failed: %s", exc)
            return 1

        write_curves(curves, self.out_dir)
        return 0

    def simulate(self) -> int:
        settings = self.config.simulation
        rng = np.random.default_rng(self.config.seed)
        params = draw_params(rng, settings.n_components, settings.n_sources, settings.noise_sd)
        if settings.exchangeable:
            params = params.into_exchangeable()

        sizes = StudySizes.uniform(settings.sizes[0], settings.n_source_treated)
        study = generate_study(params, sizes, rng, self.config.seed)
        write_simulated(study, self.out_dir)
        print(f"true_theta={study.true_theta:.6g}")
        return 0

    def monte_carlo(self) -> int:
        result = monte_carlo(self.config)
        result.save(self.out_dir)

        print(result.mre_table.to_string(index=False))
        if len(result.coverage_table):
            print(result.coverage_table.to_string(index=False))
        return 0

    def validate(self) -> int:
        try:
            dataset = self._load()
            dataset.validate_for_estimation()
        except (SynthtxError, FileNotFoundError) as exc:
            print(f"invalid: {exc}")
            return 1

        counts = " ".join(f"{k}={v}" for k, v in dataset.counts().items())
        print(f"valid: dim={dataset.dim} {counts}")
        return 0


def configure_logging(verbosity: int) -> None:
    level = {0: logging.WARNING, 1: logging.INFO}.get(verbosity, logging.DEBUG)
    logging.basicConfig(level=level, format=LOG_FORMAT)


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)

    try:
        app = App(args)
    except (ConfigError, FileNotFoundError) as exc:
        logger.error("%s", exc)
        return 2

    return app.run()


if __name__ == "__main__":
    sys.exit(main())
