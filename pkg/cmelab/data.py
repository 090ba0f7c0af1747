"""
Datasets, estimation requests and estimated curves, plus CSV ingestion and the
evaluation grid.
"""
import json
import logging
import typing
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from . import constants
from .exceptions import (
    ConstantModeratorError,
    EmptyDatasetError,
    GridOutOfSupportError,
    InvalidConfigError,
    MissingColumnError,
    NonNumericCellError,
    ValidationError,
)
from .types import Estimator, Kernel, Learner, MissingPolicy
from .utils import as_float_array, frozen, from_jsonable, parse_enum, to_jsonable

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ColumnRoles:
    """Which CSV column plays which part.

    Args:
        outcome (str): The outcome Y.
        treatment (str): The treatment D.
        moderator (str): The moderator X.
        covariates (typing.Sequence[str], optional): Additional covariates Z.
    """

    outcome: str = "Y"
    treatment: str = "D"
    moderator: str = "X"
    covariates: typing.Tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "covariates", tuple(self.covariates))

    @property
    def columns(self) -> typing.List[str]:
        return [self.outcome, self.treatment, self.moderator, *self.covariates]


@dataclass(frozen=True)
class Dataset:
    """The outcome, treatment, moderator and covariates of n observations.

    Arrays are read-only once the dataset is built. Use `Dataset.from_arrays`
    rather than the constructor: it copies, validates and freezes the inputs.
    """

    outcome: np.ndarray
    treatment: np.ndarray
    moderator: np.ndarray
    covariates: np.ndarray
    column_names: typing.Tuple[str, ...]
    treatment_binary: bool = False
    dropped_rows: int = 0

    @classmethod
    def from_arrays(
        cls,
        outcome: typing.Any,
        treatment: typing.Any,
        moderator: typing.Any,
        covariates: typing.Any = None,
        column_names: typing.Optional[typing.Sequence[str]] = None,
        treatment_binary: bool = False,
        dropped_rows: int = 0,
    ) -> "Dataset":
        """Builds a validated dataset.

        Raises:
            EmptyDatasetError: There are no observations.
            ValidationError: Lengths differ, values are non-finite or a
                             declared binary treatment is not 0/1.
        """
        y = as_float_array(outcome).ravel()
        d = as_float_array(treatment).ravel()
        x = as_float_array(moderator).ravel()
        n = y.shape[0]
        if n == 0:
            raise EmptyDatasetError(dropped_rows)

        if covariates is None:
            z = np.empty((n, 0))
        else:
            z = as_float_array(covariates, ndim=2)
            if z.size == 0:
                z = np.empty((n, 0))

        if d.shape[0] != n or x.shape[0] != n or z.shape[0] != n:
            raise ValidationError(
                f"column lengths differ: outcome {n}, treatment {d.shape[0]}, "
                f"moderator {x.shape[0]}, covariates {z.shape[0]}"
            )

        p = z.shape[1]
        if column_names is None:
            column_names = ["Y", "D", "X"] + [f"Z{j + 1}" for j in range(p)]
        column_names = tuple(column_names)
        if len(column_names) != 3 + p:
            raise ValidationError(
                f"expected {3 + p} column names, got {len(column_names)}"
            )

        for name, values in zip(column_names, [y, d, x, *z.T]):
            if not np.all(np.isfinite(values)):
                raise NonNumericCellError(name, int(np.argmin(np.isfinite(values))) + 1)

        if treatment_binary and not np.all((d == 0.0) | (d == 1.0)):
            raise ValidationError(
                f"treatment {column_names[1]!r} is declared binary but takes values "
                "other than 0 and 1"
            )

        return cls(
            outcome=frozen(y),
            treatment=frozen(d),
            moderator=frozen(x),
            covariates=frozen(z),
            column_names=column_names,
            treatment_binary=bool(treatment_binary),
            dropped_rows=int(dropped_rows),
        )

    @property
    def n(self) -> int:
        return self.outcome.shape[0]

    @property
    def p(self) -> int:
        return self.covariates.shape[1]

    @property
    def covariate_names(self) -> typing.Tuple[str, ...]:
        return self.column_names[3:]

    def take(self, indices: np.ndarray) -> "Dataset":
        """
        Returns the rows at `indices` (with repetition) as a new dataset.
        """
        return Dataset(
            outcome=frozen(self.outcome[indices]),
            treatment=frozen(self.treatment[indices]),
            moderator=frozen(self.moderator[indices]),
            covariates=frozen(self.covariates[indices]),
            column_names=self.column_names,
            treatment_binary=self.treatment_binary,
        )

    def declared_binary(self) -> "Dataset":
        """Returns the dataset with its treatment declared binary.

        Raises:
            ValidationError: The treatment takes values other than 0 and 1.
        """
        if self.treatment_binary:
            return self
        return Dataset.from_arrays(
            self.outcome,
            self.treatment,
            self.moderator,
            self.covariates,
            column_names=self.column_names,
            treatment_binary=True,
            dropped_rows=self.dropped_rows,
        )

    def to_frame(self) -> pd.DataFrame:
        columns = [self.outcome, self.treatment, self.moderator, *self.covariates.T]
        return pd.DataFrame(dict(zip(self.column_names, columns)))

    def write_csv(self, path: typing.Union[str, Path]) -> None:
        """
        Writes the dataset as a header-row CSV that `ingest_csv` reads back
        bit-for-bit.
        """
        self.to_frame().to_csv(path, index=False, float_format="%.17g")


def _parse_cell(cell: str) -> float:
    # float() rounds correctly, so written values come back bit-for-bit.
    try:
        return float(cell.strip())
    except ValueError:
        return float("nan")


def ingest_csv(
    path: typing.Union[str, Path],
    roles: ColumnRoles = ColumnRoles(),
    missing_policy: typing.Union[MissingPolicy, str] = MissingPolicy.REJECT,
    treatment_binary: bool = False,
) -> Dataset:
    """Reads and validates a CSV file.

    Args:
        path (typing.Union[str, Path]): A UTF-8, comma-separated file with a
                                        header row.
        roles (ColumnRoles, optional): Column roles. Defaults to Y, D, X and no
                                       covariates.
        missing_policy (MissingPolicy, optional): Reject or drop rows with
                                                  missing, non-numeric or
                                                  non-finite cells.
        treatment_binary (bool, optional): Declares the treatment binary. The
                                           data is checked, never inferred.

    Raises:
        ValidationError: The file does not exist.
        MissingColumnError: A column named in `roles` is not in the header.
        NonNumericCellError: A bad cell under the reject policy.
        EmptyDatasetError: No rows are left after dropping.
    """
    missing_policy = parse_enum(MissingPolicy, missing_policy, "missing policy")
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"no such file: {path}")

    frame = pd.read_csv(path, encoding="utf-8", dtype=str, keep_default_na=False)
    for column in roles.columns:
        if column not in frame.columns:
            raise MissingColumnError(column, list(frame.columns))

    numeric = pd.DataFrame(
        {column: frame[column].map(_parse_cell) for column in roles.columns}
    ).astype(float)
    finite = np.isfinite(numeric.to_numpy())

    dropped = 0
    if not finite.all():
        if missing_policy is MissingPolicy.REJECT:
            row, col = np.argwhere(~finite)[0]
            raise NonNumericCellError(roles.columns[col], int(row) + 1)
        keep = finite.all(axis=1)
        dropped = int((~keep).sum())
        numeric = numeric.loc[keep]
        if numeric.empty:
            raise EmptyDatasetError(dropped)
        message = f"dropped {dropped} rows with missing or non-finite values from {path.name}"
        logger.warning(message)
        warnings.warn(message)

    values = numeric.to_numpy()
    return Dataset.from_arrays(
        outcome=values[:, 0],
        treatment=values[:, 1],
        moderator=values[:, 2],
        covariates=values[:, 3:],
        column_names=roles.columns,
        treatment_binary=treatment_binary,
        dropped_rows=dropped,
    )


def make_grid(dataset: Dataset, grid_size: int = constants.DEFAULT_GRID_SIZE) -> np.ndarray:
    """Returns `grid_size` equally spaced points from the 1st to the 99th
    percentile of the moderator.

    Raises:
        InvalidConfigError: `grid_size` is smaller than 2.
        ConstantModeratorError: The moderator has zero range.
    """
    if int(grid_size) < 2:
        raise InvalidConfigError("grid_size", "must be at least 2")
    x = dataset.moderator
    if np.ptp(x) == 0:
        raise ConstantModeratorError(float(x[0]))
    low, high = np.percentile(x, constants.GRID_QUANTILES)
    return np.linspace(low, high, int(grid_size))


def validate_grid(dataset: Dataset, grid: typing.Any) -> np.ndarray:
    """
    Checks that every evaluation point lies inside [min(X), max(X)] and returns
    the grid as a float array.
    """
    grid = as_float_array(grid).ravel()
    if grid.size == 0:
        raise ValidationError("the evaluation grid is empty")
    low, high = float(dataset.moderator.min()), float(dataset.moderator.max())
    outside = grid[(grid < low) | (grid > high) | ~np.isfinite(grid)]
    if outside.size:
        raise GridOutOfSupportError(low, high, outside)
    return grid


@dataclass(frozen=True)
class EstimationRequest:
    """Everything an estimator needs besides the data.

    `grid` takes precedence over `grid_size`. `bandwidth` is a positive number
    or "auto" for cross-validation. `trim_threshold` of None uses four times
    the number of local regressors.
    """

    estimator: Estimator = Estimator.KERNEL
    grid: typing.Optional[typing.Tuple[float, ...]] = None
    grid_size: int = constants.DEFAULT_GRID_SIZE
    bandwidth: typing.Union[float, str] = "auto"
    kernel: Kernel = Kernel.EPANECHNIKOV
    n_bins: int = constants.DEFAULT_N_BINS
    bin_interacted_covariates: bool = False
    n_boot: int = constants.DEFAULT_N_BOOT
    confidence_level: float = constants.DEFAULT_CONFIDENCE_LEVEL
    seed: int = constants.DEFAULT_SEED
    trim_threshold: typing.Optional[float] = None
    treatment_binary: bool = False
    learner: Learner = Learner.LASSO_BASIS
    k_folds: int = constants.DEFAULT_K_FOLDS
    cv_folds: int = constants.DEFAULT_CV_FOLDS

    def __post_init__(self):
        object.__setattr__(self, "estimator", parse_enum(Estimator, self.estimator, "estimator"))
        object.__setattr__(self, "kernel", parse_enum(Kernel, self.kernel, "kernel"))
        object.__setattr__(self, "learner", parse_enum(Learner, self.learner, "learner"))
        if self.grid is not None:
            object.__setattr__(self, "grid", tuple(float(g) for g in self.grid))

        if self.n_bins < 1:
            raise InvalidConfigError("n_bins", "must be at least 1")
        if self.grid is None and self.grid_size < 2:
            raise InvalidConfigError("grid_size", "must be at least 2")
        if isinstance(self.bandwidth, str):
            if self.bandwidth != "auto":
                raise InvalidConfigError("bandwidth", "must be a positive number or 'auto'")
        elif not self.bandwidth > 0:
            raise InvalidConfigError("bandwidth", "must be positive")
        if self.n_boot < 0:
            raise InvalidConfigError("n_boot", "must be non-negative")
        if not 0 < self.confidence_level < 1:
            raise InvalidConfigError("confidence_level", "must lie strictly between 0 and 1")
        if not 0 <= self.seed < 2**64:
            raise InvalidConfigError("seed", "must be an unsigned 64-bit integer")
        if self.trim_threshold is not None and self.trim_threshold < 0:
            raise InvalidConfigError("trim_threshold", "must be non-negative")
        if self.k_folds < 2:
            raise InvalidConfigError("k_folds", "must be at least 2")
        if self.cv_folds < 2:
            raise InvalidConfigError("cv_folds", "must be at least 2")

    def resolve_grid(self, dataset: Dataset) -> np.ndarray:
        """
        Returns the explicit grid, validated against the data, or generates one.
        """
        if self.grid is not None:
            return validate_grid(dataset, self.grid)
        return make_grid(dataset, self.grid_size)

    @property
    def numeric_bandwidth(self) -> typing.Optional[float]:
        return None if isinstance(self.bandwidth, str) else float(self.bandwidth)


@dataclass(frozen=True)
class CmeCurve:
    """An estimated conditional marginal effect on a grid of moderator values.

    Trimmed points carry NaN estimates, errors and intervals. `ci_uniform` is
    None when no bootstrap was run.
    """

    grid: np.ndarray
    estimate: np.ndarray
    std_error: np.ndarray
    ci_pointwise: typing.Tuple[np.ndarray, np.ndarray]
    ci_uniform: typing.Optional[typing.Tuple[np.ndarray, np.ndarray]]
    trimmed: np.ndarray
    metadata: typing.Dict[str, typing.Any] = field(default_factory=dict)

    def __post_init__(self):
        k = self.grid.shape[0]
        vectors = [self.estimate, self.std_error, *self.ci_pointwise, self.trimmed]
        if self.ci_uniform is not None:
            vectors += list(self.ci_uniform)
        if any(v.shape != (k,) for v in vectors):
            raise ValueError("every CmeCurve vector must match the grid length")

    @property
    def valid(self) -> np.ndarray:
        """
        Boolean mask of the non-trimmed grid points.
        """
        return ~self.trimmed

    def to_dict(self) -> dict:
        return {
            "grid": to_jsonable(self.grid),
            "estimate": to_jsonable(self.estimate),
            "std_error": to_jsonable(self.std_error),
            "ci_pointwise": to_jsonable(list(self.ci_pointwise)),
            "ci_uniform": to_jsonable(list(self.ci_uniform)) if self.ci_uniform else None,
            "trimmed": to_jsonable(self.trimmed),
            "metadata": to_jsonable(self.metadata),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CmeCurve":
        uniform = data.get("ci_uniform")
        return cls(
            grid=from_jsonable(data["grid"]),
            estimate=from_jsonable(data["estimate"]),
            std_error=from_jsonable(data["std_error"]),
            ci_pointwise=tuple(from_jsonable(v) for v in data["ci_pointwise"]),
            ci_uniform=tuple(from_jsonable(v) for v in uniform) if uniform else None,
            trimmed=np.array(data["trimmed"], dtype=bool),
            metadata=dict(data.get("metadata", {})),
        )

    def to_json(self, path: typing.Optional[typing.Union[str, Path]] = None) -> str:
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            Path(path).write_text(text + "\n", encoding="utf-8")
        return text

    def to_frame(self) -> pd.DataFrame:
        """
        One row per grid point; plot-ready.
        """
        frame = pd.DataFrame(
            {
                "x": self.grid,
                "estimate": self.estimate,
                "std_error": self.std_error,
                "ci_pointwise_lower": self.ci_pointwise[0],
                "ci_pointwise_upper": self.ci_pointwise[1],
                "trimmed": self.trimmed,
            }
        )
        if self.ci_uniform is not None:
            frame["ci_uniform_lower"] = self.ci_uniform[0]
            frame["ci_uniform_upper"] = self.ci_uniform[1]
        return frame

    def to_csv(self, path: typing.Union[str, Path]) -> None:
        self.to_frame().to_csv(path, index=False, float_format="%.17g")
