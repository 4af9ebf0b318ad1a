import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from synthtx.dataset import CONTROL, TARGET, TREATED, Dataset, load_dataset
from synthtx.errors import DatasetError, DegenerateDataError


def write_csv(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


VALID = """pop,arm,y,x1
0,0,1.5,0.1
0,0,2.5,0.2
1,1,3.0,0.3
1,0,1.0,0.4
"""


def test_load_valid_file(tmp_path):
    dataset = load_dataset(write_csv(tmp_path, VALID))

    assert len(dataset) == 4
    assert dataset.dim == 1
    assert dataset.n_sources == 1
    assert dataset.counts() == {"n0": 2, "m1": 1, "n1": 1}
    assert_allclose(dataset.target_x()[:, 0], [0.1, 0.2])
    dataset.validate_for_estimation()


def test_header_only_file(tmp_path):
    with pytest.raises(DatasetError) as info:
        load_dataset(write_csv(tmp_path, "pop,arm,y,x1\n"))

    assert info.value.line == 2


def test_empty_file(tmp_path):
    with pytest.raises(DatasetError) as info:
        load_dataset(write_csv(tmp_path, ""))

    assert info.value.line == 1


@pytest.mark.parametrize(
    "header", ["pop,arm,y", "pop,arm,outcome,x1", "pop,arm,y,x2", "arm,pop,y,x1"]
)
def test_bad_headers(tmp_path, header):
    with pytest.raises(DatasetError) as info:
        load_dataset(write_csv(tmp_path, f"{header}\n0,0,1.0,0.5\n"))

    assert info.value.line == 1


def test_target_treated_row(tmp_path):
    text = "pop,arm,y,x1\n0,0,1.0,0.1\n0,1,1.0,0.2\n"

    with pytest.raises(DatasetError) as info:
        load_dataset(write_csv(tmp_path, text))

    assert info.value.line == 3
    assert "line 3" in str(info.value)


def test_non_numeric_value(tmp_path):
    text = "pop,arm,y,x1\n0,0,1.0,0.1\n1,1,abc,0.2\n"

    with pytest.raises(DatasetError) as info:
        load_dataset(write_csv(tmp_path, text))

    assert info.value.line == 3


def test_non_integral_population(tmp_path):
    with pytest.raises(DatasetError) as info:
        load_dataset(write_csv(tmp_path, "pop,arm,y,x1\n0.5,0,1.0,0.1\n"))

    assert info.value.line == 2


@pytest.mark.parametrize("row", ["-1,0,1.0,0.1", "1,2,1.0,0.1", "1,0,inf,0.1", "1,0,1.0,nan"])
def test_invalid_rows(tmp_path, row):
    with pytest.raises(DatasetError) as info:
        load_dataset(write_csv(tmp_path, f"pop,arm,y,x1\n0,0,1.0,0.1\n{row}\n"))

    assert info.value.line == 3


def test_ragged_row(tmp_path):
    with pytest.raises(DatasetError) as info:
        load_dataset(write_csv(tmp_path, "pop,arm,y,x1\n0,0,1.0,0.1\n1,1,2.0,0.5,9\n"))

    assert info.value.line == 3


def test_extra_field_on_first_row(tmp_path):
    with pytest.raises(DatasetError) as info:
        load_dataset(write_csv(tmp_path, "pop,arm,y,x1\n0,0,1.0,0.1,7\n1,1,2.0,0.5\n"))

    assert info.value.line == 2


def test_invalid_utf8(tmp_path):
    path = tmp_path / "data.csv"
    path.write_bytes(b"pop,arm,y,x1\n0,0,1.0,0.1\n1,1,\xff\xfe,0.5\n")

    with pytest.raises(DatasetError) as info:
        load_dataset(path)

    assert info.value.line == 3


def test_lines_count_blank_rows(tmp_path):
    text = "pop,arm,y,x1\n0,0,1.0,0.1\n\n\n0,1,1.0,0.2\n"

    with pytest.raises(DatasetError) as info:
        load_dataset(write_csv(tmp_path, text))

    assert info.value.line == 5


def test_blank_rows_are_skipped(tmp_path):
    dataset = load_dataset(write_csv(tmp_path, VALID.replace("\n1,1", "\n\n1,1")))

    assert len(dataset) == 4
    assert_allclose(dataset.y, [1.5, 2.5, 3.0, 1.0])


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_dataset(tmp_path / "missing.csv")


def test_validate_for_estimation():
    no_treated = Dataset.from_blocks([(TARGET, CONTROL, [0.0], [1.0]), (1, CONTROL, [0.0], [1.0])])
    with pytest.raises(DatasetError):
        no_treated.validate_for_estimation()

    no_target = Dataset.from_blocks([(1, TREATED, [0.0], [1.0]), (1, CONTROL, [0.0], [1.0])])
    with pytest.raises(DatasetError):
        no_target.validate_for_estimation()


def test_asinh_transform(tmp_path):
    dataset = load_dataset(write_csv(tmp_path, VALID), asinh_columns=("y",))

    assert_allclose(dataset.y, np.arcsinh([1.5, 2.5, 3.0, 1.0]))
    assert_allclose(dataset.x[:, 0], [0.1, 0.2, 0.3, 0.4])
    assert dataset.transforms["asinh"] == ["y"]


def test_asinh_is_odd_and_fixes_zero():
    dataset = Dataset.from_blocks([(TARGET, CONTROL, [0.0, 0.0, 0.0], [-2.0, 0.0, 2.0])])
    transformed = dataset.with_asinh(["y", "x1"])

    assert transformed.y[1] == 0.0
    assert_allclose(transformed.y[0], -transformed.y[2])
    assert_allclose(transformed.y[2], np.log(2.0 + np.sqrt(5.0)))


def test_asinh_unknown_column():
    dataset = Dataset.from_blocks([(TARGET, CONTROL, [0.0], [1.0])])

    with pytest.raises(DatasetError):
        dataset.with_asinh(["x2"])


def test_standardize_uses_target_controls(tmp_path):
    dataset = load_dataset(write_csv(tmp_path, VALID), standardize=True)
    reference = np.array([1.5, 2.5])
    mean, sd = reference.mean(), reference.std(ddof=1)

    assert_allclose(dataset.y, (np.array([1.5, 2.5, 3.0, 1.0]) - mean) / sd)
    assert dataset.transforms["standardize_mean"] == mean


def test_standardize_constant_target():
    dataset = Dataset.from_blocks([(TARGET, CONTROL, [0.0, 1.0], [3.0, 3.0])])

    with pytest.raises(DegenerateDataError):
        dataset.standardized()


def test_save_then_load(tmp_path, small_study):
    path = tmp_path / "study.csv"
    small_study.dataset.save(path)
    loaded = load_dataset(path)

    assert_array_equal(loaded.pop, small_study.dataset.pop)
    assert_array_equal(loaded.arm, small_study.dataset.arm)
    assert_array_equal(loaded.y, small_study.dataset.y)
    assert_array_equal(loaded.x, small_study.dataset.x)


def test_row_access():
    dataset = Dataset.from_blocks(
        [(TARGET, CONTROL, [[0.5, 1.5]], [2.0]), (1, TREATED, [[1.0, 2.0]], [3.0])]
    )
    row = dataset.row(1)

    assert (row.pop, row.arm, row.y) == (1, TREATED, 3.0)
    assert_array_equal(row.x, [1.0, 2.0])
    assert dataset.column_names() == ["pop", "arm", "y", "x1", "x2"]
