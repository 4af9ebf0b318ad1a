import sys
import io
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Final, Iterable, Sequence

if sys.version_info >= (3, 11):
    from typing import Self
else:
    from typing_extensions import Self

import numpy as np
import pandas as pd
from numpy.typing import ArrayLike, NDArray

from synthtx.errors import DatasetError, DegenerateDataError, ShapeError
from synthtx.kernel import as_points

logger = logging.getLogger(__name__)

TARGET: Final[int] = 0
CONTROL: Final[int] = 0
TREATED: Final[int] = 1

HEAD_COLUMNS: Final[tuple[str, ...]] = ("pop", "arm", "y")
FIRST_DATA_LINE: Final[int] = 2


@dataclass(slots=True, frozen=True)
class Observation:
    pop: int
    arm: int
    y: float
    x: NDArray[np.float64]


@dataclass(slots=True)
class Dataset:
    """
    Description
    -----------
    Tagged observations for every population. Population 0 is the target and has
    control rows only; populations 1..N are sources.

    Row k sits on line k + 2 of the CSV written by `save`, which is the line
    reported by validation errors.

    """

    pop: NDArray[np.int64]
    arm: NDArray[np.int64]
    y: NDArray[np.float64]
    x: NDArray[np.float64]
    transforms: dict[str, object] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.pop = np.asarray(self.pop, dtype=np.int64).ravel()
        self.arm = np.asarray(self.arm, dtype=np.int64).ravel()
        self.y = np.asarray(self.y, dtype=float).ravel()
        self.x = as_points(self.x)

        n = len(self.y)
        if not (len(self.pop) == len(self.arm) == len(self.x) == n):
            raise ShapeError("Dataset columns differ in length.")

        _check_rows(self.pop, self.arm, self.y, self.x)

    def __len__(self) -> int:
        return len(self.y)

    @classmethod
    def from_csv(
        cls,
        filepath: Path,
        asinh_columns: Sequence[str] = (),
        standardize: bool = False,
    ) -> Self:
        """
        Description
        -----------
        Load a `pop,arm,y,x1..xd` CSV.

        Parameters
        ----------
        asinh_columns : Sequence[str]
            Columns passed through asinh(v) = ln(v + sqrt(v^2 + 1)) after loading.

        standardize : bool
            Standardize outcomes by the target control mean and sd.

        Raises
        ------
        FileNotFoundError
            If the file doesn't exist.
        DatasetError
            Schema violations, non-numeric or non-finite values and target treated
            rows, with the offending line.

        """
        if not filepath.exists():
            raise FileNotFoundError(f"File {filepath} does not exist.")

        frame = _read_frame(filepath)
        columns = [c.strip() for c in frame.columns]
        _check_header(columns)
        if len(frame) == 0:
            raise DatasetError("Dataset is empty.", FIRST_DATA_LINE)

        # Blank rows are dropped here rather than by pandas so each row keeps its line.
        empty = frame.apply(lambda column: column.str.strip() == "")
        blank = empty.all(axis=1).to_numpy(dtype=bool)
        lines = np.flatnonzero(~blank) + FIRST_DATA_LINE
        frame = frame[~blank]
        if len(frame) == 0:
            raise DatasetError("Dataset is empty.", FIRST_DATA_LINE)

        values = np.column_stack(
            [_numeric_column(frame.iloc[:, k], c, lines) for k, c in enumerate(columns)]
        )
        _check_integral(values[:, 0], "pop", lines)
        _check_integral(values[:, 1], "arm", lines)
        _check_rows(values[:, 0], values[:, 1], values[:, 2], values[:, 3:], lines)

        dataset = cls(values[:, 0], values[:, 1], values[:, 2], values[:, 3:])
        if asinh_columns:
            dataset = dataset.with_asinh(asinh_columns)
        if standardize:
            dataset = dataset.standardized()

        logger.info(
            "Loaded %d observations over %d sources from %s.",
            len(dataset),
            dataset.n_sources,
            filepath,
        )
        return dataset

    @classmethod
    def from_blocks(cls, blocks: Iterable[tuple[int, int, ArrayLike, ArrayLike]]) -> Self:
        """
        Description
        -----------
        Concatenate (pop, arm, x, y) blocks in the given order.

        """
        pops, arms, ys, xs = [], [], [], []
        for pop, arm, x, y in blocks:
            outcomes = np.asarray(y, dtype=float).ravel()
            pops.append(np.full(len(outcomes), pop))
            arms.append(np.full(len(outcomes), arm))
            ys.append(outcomes)
            xs.append(as_points(x))

        return cls(np.concatenate(pops), np.concatenate(arms), np.concatenate(ys), np.vstack(xs))

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    @property
    def n_sources(self) -> int:
        return int(self.pop.max(initial=0))

    @property
    def n_target(self) -> int:
        return int(np.sum(self.pop == TARGET))

    def row(self, k: int) -> Observation:
        return Observation(int(self.pop[k]), int(self.arm[k]), float(self.y[k]), self.x[k])

    def mask(self, pop: int, arm: int) -> NDArray[np.bool_]:
        return (self.pop == pop) & (self.arm == arm)

    def group(self, pop: int, arm: int) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        selected = self.mask(pop, arm)
        return self.x[selected], self.y[selected]

    def target_x(self) -> NDArray[np.float64]:
        return self.group(TARGET, CONTROL)[0]

    def control_data(self, pop: int) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        return self.group(pop, CONTROL)

    def treated_data(self, pop: int) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        return self.group(pop, TREATED)

    def pooled_treated(self) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        selected = (self.pop != TARGET) & (self.arm == TREATED)
        return self.x[selected], self.y[selected]

    def counts(self) -> dict[str, int]:
        result = {"n0": self.n_target}
        for i in range(1, self.n_sources + 1):
            result[f"m{i}"] = int(np.sum(self.mask(i, TREATED)))
            result[f"n{i}"] = int(np.sum(self.mask(i, CONTROL)))

        return result

    def validate_for_estimation(self) -> None:
        """
        Description
        -----------
        Every population 1..N must have a treated and a control row, and the
        target must have at least one row.

        Raises
        ------
        DatasetError

        """
        if self.n_target == 0:
            raise DatasetError("Target population 0 has no rows.")
        if self.n_sources == 0:
            raise DatasetError("No source populations.")

        for i in range(1, self.n_sources + 1):
            if not np.any(self.mask(i, TREATED)):
                raise DatasetError(f"Source population {i} has no treated rows.")
            if not np.any(self.mask(i, CONTROL)):
                raise DatasetError(f"Source population {i} has no control rows.")

    def with_asinh(self, columns: Sequence[str]) -> Self:
        names = self.column_names()
        y, x = self.y.copy(), self.x.copy()
        for column in columns:
            if column not in names[2:]:
                raise DatasetError(
                    f"Cannot transform column {column!r}; expected one of {names[2:]}."
                )
            if column == "y":
                y = np.arcsinh(y)
            else:
                k = names.index(column) - 3
                x[:, k] = np.arcsinh(x[:, k])

        transforms = {**self.transforms, "asinh": list(columns)}
        return self.__class__(self.pop, self.arm, y, x, transforms)

    def standardized(self) -> Self:
        reference = self.y[self.mask(TARGET, CONTROL)]
        if len(reference) < 2:
            raise DegenerateDataError("Standardizing needs at least two target rows.")

        mean, sd = float(reference.mean()), float(reference.std(ddof=1))
        if not sd > 0:
            raise DegenerateDataError("Target control outcomes are constant.")

        transforms = {**self.transforms, "standardize_mean": mean, "standardize_sd": sd}
        return self.__class__(self.pop, self.arm, (self.y - mean) / sd, self.x, transforms)

    def column_names(self) -> list[str]:
        return [*HEAD_COLUMNS, *(f"x{k + 1}" for k in range(self.dim))]

    def as_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.x, columns=self.column_names()[3:])
        frame.insert(0, "y", self.y)
        frame.insert(0, "arm", self.arm)
        frame.insert(0, "pop", self.pop)
        return frame

    def save(self, path: Path) -> None:
        self.as_frame().to_csv(path, index=False, float_format="%.17g")


def load_dataset(
    path: Path, asinh_columns: Sequence[str] = (), standardize: bool = False
) -> Dataset:
    return Dataset.from_csv(path, asinh_columns, standardize)


################################


def _read_frame(filepath: Path) -> pd.DataFrame:
    raw = filepath.read_bytes()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        line = raw[: exc.start].count(b"\n") + 1
        raise DatasetError(f"Invalid UTF-8 byte {raw[exc.start]:#04x}.", line) from exc

    try:
        frame = pd.read_csv(
            io.StringIO(text), dtype=str, keep_default_na=False, skip_blank_lines=False
        )
    except pd.errors.EmptyDataError as exc:
        raise DatasetError("Empty file, expected a pop,arm,y,x1..xd header.", 1) from exc
    except pd.errors.ParserError as exc:
        found = re.search(r"line (\d+)", str(exc))
        raise DatasetError(f"Malformed CSV: {exc}", int(found[1]) if found else None) from exc

    # pandas turns a first data row with one extra field into an index column.
    if not isinstance(frame.index, pd.RangeIndex):
        raise DatasetError("Row has more fields than the header.", FIRST_DATA_LINE)

    return frame.fillna("")


def _check_header(columns: list[str]) -> None:
    if tuple(columns[:3]) != HEAD_COLUMNS or len(columns) < 4:
        raise DatasetError(f"Header must be pop,arm,y,x1..xd, got {','.join(columns)}.", 1)

    expected = [f"x{k + 1}" for k in range(len(columns) - 3)]
    if columns[3:] != expected:
        raise DatasetError(f"Covariate columns must be {','.join(expected)}.", 1)


def _numeric_column(raw: pd.Series, name: str, lines: NDArray[np.int64]) -> NDArray[np.float64]:
    values = pd.to_numeric(raw.str.strip(), errors="coerce").to_numpy(dtype=float)
    bad = np.flatnonzero(~np.isfinite(values))
    if len(bad):
        k = int(bad[0])
        raise DatasetError(
            f"Column {name} has non-numeric or non-finite value {raw.iloc[k]!r}.",
            int(lines[k]),
        )

    return values


def _check_integral(values: NDArray[np.float64], name: str, lines: NDArray[np.int64]) -> None:
    bad = np.flatnonzero(values != np.round(values))
    if len(bad):
        k = int(bad[0])
        raise DatasetError(f"Column {name} must be an integer, got {values[k]}.", int(lines[k]))


def _check_rows(
    pop: NDArray[np.int64],
    arm: NDArray[np.int64],
    y: NDArray[np.float64],
    x: NDArray[np.float64],
    lines: NDArray[np.int64] | None = None,
) -> None:
    checks = (
        (pop < 0, "negative population id"),
        ((arm != CONTROL) & (arm != TREATED), "arm must be 0 or 1"),
        ((pop == TARGET) & (arm == TREATED), "target population 0 cannot have treated rows"),
        (~np.isfinite(y), "non-finite outcome"),
        (~np.all(np.isfinite(x), axis=1), "non-finite covariate"),
    )
    for failed, message in checks:
        bad = np.flatnonzero(failed)
        if len(bad):
            k = int(bad[0])
            raise DatasetError(message, k + FIRST_DATA_LINE if lines is None else int(lines[k]))
