import sys
import json
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Final

if sys.version_info >= (3, 11):
    from typing import Self
else:
    from typing_extensions import Self

from synthtx.errors import ConfigError
from synthtx.estimator import Method
from synthtx.kernel import DEFAULT_LAMBDA, BandwidthRule

THREADS_VARIABLE: Final[str] = "SYNTHTX_THREADS"
REPORT_CONFIG_KEY: Final[str] = "config"

DESK_SIZES: Final[tuple[int, ...]] = (500,)
DESK_REPLICATES: Final[int] = 50
FULL_SIZES: Final[tuple[int, ...]] = (4000,)
FULL_REPLICATES: Final[int] = 100
FULL_SOURCE_TREATED: Final[int] = 4000


@dataclass(slots=True, frozen=True)
class KernelSettings:
    bandwidth_x: float | None = None
    bandwidth_y: float | None = None
    lam: float = DEFAULT_LAMBDA
    bandwidth_rule: str = BandwidthRule.MEDIAN_HEURISTIC.value

    def __post_init__(self) -> None:
        rule = _enum(BandwidthRule, self.bandwidth_rule, "kernel.bandwidth_rule")
        if rule is BandwidthRule.FIXED and (self.bandwidth_x is None or self.bandwidth_y is None):
            raise ConfigError("Fixed bandwidth rule needs bandwidth_x and bandwidth_y.")
        if not self.lam > 0:
            raise ConfigError(f"kernel.lam must be positive, got {self.lam}.")

    @property
    def rule(self) -> BandwidthRule:
        return BandwidthRule(self.bandwidth_rule)


@dataclass(slots=True, frozen=True)
class SieveSettings:
    weight_order: int = 3
    weight_knots: int = 0
    regression_order: int = 3
    regression_knots: int = 2
    constrained: bool = True
    pointwise_simplex: bool = False
    ridge: float | None = None

    def __post_init__(self) -> None:
        if self.weight_order < 1 or self.regression_order < 1:
            raise ConfigError("Spline orders must be at least 1.")
        if self.weight_knots < 0 or self.regression_knots < 0:
            raise ConfigError("Knot counts cannot be negative.")
        if self.ridge is not None and self.ridge < 0:
            raise ConfigError(f"sieve.ridge cannot be negative, got {self.ridge}.")


@dataclass(slots=True, frozen=True)
class SimulationSettings:
    replicates: int = DESK_REPLICATES
    sizes: tuple[int, ...] = DESK_SIZES
    n_source_treated: int | None = None
    n_components: int = 3
    n_sources: int = 3
    noise_sd: float = 1.0
    exchangeable: bool = False
    methods: tuple[str, ...] = tuple(m.value for m in Method)
    workers: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))
        object.__setattr__(self, "methods", tuple(self.methods))

        if self.replicates < 1:
            raise ConfigError(f"simulation.replicates must be at least 1, got {self.replicates}.")
        if not self.sizes or min(self.sizes) < 1:
            raise ConfigError("simulation.sizes must be a nonempty list of positive sizes.")
        if self.n_source_treated is not None and self.n_source_treated < 1:
            raise ConfigError("simulation.n_source_treated must be positive.")
        if self.n_components < 1 or self.n_sources < 1:
            raise ConfigError("Need at least one mixture component and one source.")
        for method in self.methods:
            _enum(Method, method, "simulation.methods")

    @classmethod
    def full_scale(cls) -> Self:
        return cls(
            replicates=FULL_REPLICATES,
            sizes=FULL_SIZES,
            n_source_treated=FULL_SOURCE_TREATED,
        )


@dataclass(slots=True, frozen=True)
class RunConfig:
    """
    Description
    -----------
    Resolved settings of one run. Every report embeds `as_dict()` so the run can
    be repeated with `from_report`.

    """

    method: str = Method.SIEVE.value
    alpha: float = 0.05
    seed: int = 0
    input: str | None = None
    out_dir: str = "out"
    asinh_columns: tuple[str, ...] = ()
    standardize: bool = False
    kernel: KernelSettings = field(default_factory=KernelSettings)
    sieve: SieveSettings = field(default_factory=SieveSettings)
    simulation: SimulationSettings = field(default_factory=SimulationSettings)

    def __post_init__(self) -> None:
        object.__setattr__(self, "asinh_columns", tuple(self.asinh_columns))
        _enum(Method, self.method, "method")
        if not 0 < self.alpha < 1:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}.")

    @property
    def method_enum(self) -> Method:
        return Method(self.method)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Self:
        """
        Description
        -----------
        Build from a nested dict; unknown keys are rejected.

        """
        sections = {
            "kernel": KernelSettings,
            "sieve": SieveSettings,
            "simulation": SimulationSettings,
        }
        values = _known(cls, data, "config")
        for key, section in sections.items():
            if key in values:
                if not isinstance(values[key], dict):
                    raise ConfigError(f"Section {key} must be an object.")
                values[key] = section(**_known(section, values[key], key))

        try:
            return cls(**values)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json(cls, filepath: Path) -> Self:
        if not filepath.exists():
            raise FileNotFoundError(f"File {filepath} does not exist.")

        with open(filepath, "r") as file:
            try:
                data = json.load(file)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{filepath}: {exc}") from exc

        if not isinstance(data, dict):
            raise ConfigError(f"{filepath}: top level must be an object.")

        return cls.from_dict(data)

    @classmethod
    def from_report(cls, filepath: Path) -> Self:
        prefix = f"{REPORT_CONFIG_KEY}="
        with open(filepath, "r") as file:
            for line in file:
                if line.startswith(prefix):
                    return cls.from_dict(json.loads(line[len(prefix) :]))

        raise ConfigError(f"{filepath} embeds no configuration.")

    def with_overrides(self, **overrides: Any) -> Self:
        """
        Description
        -----------
        Copy with the non-None overrides applied. `full_scale=True` switches the
        simulation to the full-scale profile.

        """
        full_scale = overrides.pop("full_scale", False)
        changes = {k: v for k, v in overrides.items() if v is not None}
        if full_scale:
            changes["simulation"] = replace(
                SimulationSettings.full_scale(),
                methods=self.simulation.methods,
                exchangeable=self.simulation.exchangeable,
                workers=self.simulation.workers,
            )

        try:
            return replace(self, **changes)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def as_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data["asinh_columns"] = list(self.asinh_columns)
        data["simulation"]["sizes"] = list(self.simulation.sizes)
        data["simulation"]["methods"] = list(self.simulation.methods)
        return data

    def as_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True)


def worker_count(settings: SimulationSettings) -> int:
    """
    Description
    -----------
    Worker processes for replicates: the configured count, capped by
    SYNTHTX_THREADS when set.

    """
    count = settings.workers or os.cpu_count() or 1
    cap = os.environ.get(THREADS_VARIABLE)
    if cap is None:
        return max(count, 1)

    try:
        return max(min(count, int(cap)), 1)
    except ValueError as exc:
        raise ConfigError(f"{THREADS_VARIABLE} must be an integer, got {cap!r}.") from exc


################################


def _known(cls: type, data: dict[str, Any], where: str) -> dict[str, Any]:
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"Unknown keys in {where}: {', '.join(unknown)}.")

    return dict(data)


def _enum(enum: type, value: str, where: str):
    try:
        return enum(value)
    except ValueError as exc:
        choices = ", ".join(e.value for e in enum)
        raise ConfigError(f"{where}: {value!r} is not one of {choices}.") from exc
