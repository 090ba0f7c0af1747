"""
Test dataset ingestion, the evaluation grid, requests and curve serialization.
"""
import json

import numpy as np
import pytest

from cmelab.data import (
    CmeCurve,
    ColumnRoles,
    Dataset,
    EstimationRequest,
    ingest_csv,
    make_grid,
    validate_grid,
)
from cmelab.dgp import get_dgp, sample
from cmelab.exceptions import (
    ConstantModeratorError,
    EmptyDatasetError,
    GridOutOfSupportError,
    InvalidConfigError,
    MissingColumnError,
    NonNumericCellError,
    UnknownNameError,
    ValidationError,
)
from cmelab.linear import estimate_linear
from cmelab.types import MissingPolicy


def write(tmp_path, text):
    path = tmp_path / "data.csv"
    path.write_text(text, encoding="utf-8")
    return path


def test_ingest_minimal_csv(tmp_path):
    path = write(tmp_path, "Y,D,X\n1,0,0.5\n2,1,1.5\n3,0,2.5\n")
    dataset = ingest_csv(path)
    assert dataset.n == 3
    assert dataset.p == 0
    assert dataset.column_names == ("Y", "D", "X")
    assert np.array_equal(dataset.moderator, [0.5, 1.5, 2.5])


def test_ingest_drops_missing_rows(tmp_path):
    path = write(tmp_path, "Y,D,X\n1,0,0.5\nNaN,1,1.5\n3,0,2.5\n4,1,\n")
    with pytest.warns(UserWarning, match="dropped 2 rows"):
        dataset = ingest_csv(path, missing_policy="drop_rows")
    assert dataset.n == 2
    assert dataset.dropped_rows == 2


def test_ingest_rejects_missing_values(tmp_path):
    path = write(tmp_path, "Y,D,X\n1,0,0.5\n2,abc,1.5\n")
    with pytest.raises(NonNumericCellError, match="'D'"):
        ingest_csv(path, missing_policy=MissingPolicy.REJECT)


def test_ingest_missing_column(tmp_path):
    path = write(tmp_path, "Y,D,X,Z1\n1,0,0.5,1\n")
    roles = ColumnRoles(covariates=("Z1", "Z2"))
    with pytest.raises(MissingColumnError, match="missing column 'Z2'"):
        ingest_csv(path, roles)


def test_ingest_everything_dropped(tmp_path):
    path = write(tmp_path, "Y,D,X\ninf,0,1\n")
    with pytest.raises(EmptyDatasetError, match="after dropping 1 rows"):
        ingest_csv(path, missing_policy="drop_rows")


def test_ingest_custom_roles(tmp_path):
    path = write(tmp_path, "outcome,t,m,age\n1,0,0.5,30\n2,1,1.5,40\n")
    dataset = ingest_csv(path, ColumnRoles("outcome", "t", "m", ("age",)))
    assert dataset.p == 1
    assert dataset.covariate_names == ("age",)


def test_declared_binary_treatment_is_checked(tmp_path):
    path = write(tmp_path, "Y,D,X\n1,0,0.5\n2,0.5,1.5\n")
    with pytest.raises(ValidationError, match="declared binary"):
        ingest_csv(path, treatment_binary=True)


def test_csv_round_trip_is_exact(tmp_path):
    dataset = sample(get_dgp("fig3_binary"), 200, seed=4)
    path = tmp_path / "sample.csv"
    dataset.write_csv(path)
    again = ingest_csv(path, ColumnRoles(covariates=("Z1", "Z2")))
    for a, b in [
        (dataset.outcome, again.outcome),
        (dataset.treatment, again.treatment),
        (dataset.moderator, again.moderator),
        (dataset.covariates, again.covariates),
    ]:
        assert np.array_equal(a, b)


def test_dataset_arrays_are_read_only():
    dataset = Dataset.from_arrays([1.0, 2.0], [0.0, 1.0], [0.0, 1.0])
    with pytest.raises(ValueError):
        dataset.outcome[0] = 5.0


def test_make_grid_spans_percentiles():
    x = np.linspace(-2, 2, 10001)
    dataset = Dataset.from_arrays(np.zeros_like(x), np.zeros_like(x), x)
    grid = make_grid(dataset, 5)
    assert grid.shape == (5,)
    assert grid[0] == pytest.approx(-1.96)
    assert grid[-1] == pytest.approx(1.96)
    assert np.allclose(np.diff(grid), np.diff(grid)[0])


def test_make_grid_two_points_are_endpoints():
    x = np.arange(101.0)
    dataset = Dataset.from_arrays(x, x, x)
    assert np.allclose(make_grid(dataset, 2), [1.0, 99.0])


def test_make_grid_constant_moderator():
    dataset = Dataset.from_arrays([1.0, 2.0, 3.0], [0.0, 1.0, 0.0], [0.0, 0.0, 0.0])
    with pytest.raises(ConstantModeratorError, match="constant moderator"):
        make_grid(dataset)


def test_make_grid_size_too_small():
    dataset = Dataset.from_arrays([1.0, 2.0], [0.0, 1.0], [0.0, 1.0])
    with pytest.raises(InvalidConfigError):
        make_grid(dataset, 1)


def test_validate_grid_outside_support():
    dataset = Dataset.from_arrays([1.0, 2.0, 3.0], [0.0, 1.0, 0.0], [0.0, 1.0, 2.0])
    assert np.array_equal(validate_grid(dataset, [0.0, 2.0]), [0.0, 2.0])
    with pytest.raises(GridOutOfSupportError):
        validate_grid(dataset, [0.5, 2.5])


def test_request_unknown_estimator_lists_names():
    with pytest.raises(UnknownNameError) as info:
        EstimationRequest(estimator="splines")
    for name in ("linear", "binning", "kernel", "aipw_lasso", "pds_lasso", "dml_plm"):
        assert name in str(info.value)


@pytest.mark.parametrize(
    "options",
    [
        {"n_bins": 0},
        {"bandwidth": -1.0},
        {"bandwidth": "wide"},
        {"confidence_level": 1.0},
        {"n_boot": -5},
        {"seed": -1},
        {"k_folds": 1},
    ],
)
def test_request_rejects_invalid_options(options):
    with pytest.raises(InvalidConfigError):
        EstimationRequest(**options)


def test_curve_json_round_trip(small_key_data):
    curve = estimate_linear(small_key_data, n_boot=50, seed=2)
    data = json.loads(curve.to_json())
    assert set(data) == {
        "grid",
        "estimate",
        "std_error",
        "ci_pointwise",
        "ci_uniform",
        "trimmed",
        "metadata",
    }
    again = CmeCurve.from_dict(data)
    assert np.array_equal(again.estimate, curve.estimate)
    assert np.array_equal(again.ci_uniform[1], curve.ci_uniform[1])
    assert again.metadata["estimator"] == "linear"


def test_curve_nan_serializes_as_null():
    nan = np.array([np.nan, 1.0])
    curve = CmeCurve(
        grid=np.array([0.0, 1.0]),
        estimate=nan,
        std_error=nan,
        ci_pointwise=(nan, nan),
        ci_uniform=None,
        trimmed=np.array([True, False]),
    )
    data = curve.to_dict()
    assert data["estimate"] == [None, 1.0]
    assert data["ci_uniform"] is None
    assert np.isnan(CmeCurve.from_dict(data).estimate[0])


def test_curve_csv_has_one_row_per_grid_point(tmp_path, small_key_data):
    curve = estimate_linear(small_key_data, n_boot=0)
    curve.to_csv(tmp_path / "curve.csv")
    frame = curve.to_frame()
    assert len(frame) == curve.grid.shape[0]
    assert "ci_uniform_lower" not in frame.columns
