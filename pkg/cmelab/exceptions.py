import typing


class CmeLabError(Exception):
    """
    Base class for every error raised by the library.
    """


class ValidationError(CmeLabError):
    """
    The input (data, names, configuration) is unusable. The CLI exits with
    code 2.
    """


class EstimationError(CmeLabError):
    """
    The input is valid but the numerics failed. The CLI exits with code 3.
    """


class MissingColumnError(ValidationError):
    """
    Raised when a column named in the role mapping is not in the file.
    """

    def __init__(self, column: str, available: typing.Sequence[str]):
        self.column = column
        super().__init__(
            f"missing column {column!r}. Columns in the file: {', '.join(available)}"
        )


class NonNumericCellError(ValidationError):
    """
    Raised under the reject policy when a cell is missing, non-numeric or
    non-finite.
    """

    def __init__(self, column: str, row: int):
        self.column = column
        self.row = row
        super().__init__(
            f"non-numeric or non-finite value in column {column!r} at data row {row}. "
            "Use the drop_rows missing policy to drop such rows."
        )


class EmptyDatasetError(ValidationError):
    """
    Raised when no rows are left to estimate with.
    """

    def __init__(self, dropped: int = 0):
        super().__init__(
            "the dataset is empty"
            + (f" after dropping {dropped} rows with missing values" if dropped else "")
        )


class ConstantModeratorError(ValidationError):
    """
    Raised when the moderator takes a single value, so no grid can span it.
    """

    def __init__(self, value: float):
        super().__init__(f"constant moderator: every value equals {value!r}")


class GridOutOfSupportError(ValidationError):
    """
    Raised when evaluation points fall outside the observed moderator range.
    """

    def __init__(self, low: float, high: float, offending: typing.Sequence[float]):
        shown = ", ".join(f"{x:.6g}" for x in list(offending)[:5])
        super().__init__(
            f"grid points outside the moderator support [{low:.6g}, {high:.6g}]: {shown}"
        )


class UnknownNameError(ValidationError):
    """
    Raised when a name (estimator, kernel, learner, DGP...) is not recognised.
    The message lists the valid names.
    """

    def __init__(self, kind: str, name: str, valid: typing.Iterable[str]):
        self.kind = kind
        self.name = name
        super().__init__(
            f"unknown {kind} {name!r}. Valid names: {', '.join(valid)}"
        )


class InvalidConfigError(ValidationError):
    """
    Raised when a configuration value is out of range or of the wrong type.
    """

    def __init__(self, key: str, reason: str):
        self.key = key
        super().__init__(f"invalid value for {key!r}: {reason}")


class OracleUnavailableError(ValidationError):
    """
    Raised when a process without an analytic oracle is used where one is
    required.
    """

    def __init__(self, dgp_name: str, oracle: str = "cme"):
        super().__init__(
            f"oracle required: the {dgp_name!r} process has no {oracle} oracle"
        )


class UnsupportedDgpError(ValidationError):
    """
    Raised when an operation is only defined for some processes.
    """

    def __init__(self, operation: str, dgp_name: str, supported: typing.Iterable[str]):
        super().__init__(
            f"{operation} is not defined for {dgp_name!r}. Supported: {', '.join(supported)}"
        )


class RankDeficiencyError(EstimationError):
    """
    Raised when a (weighted) design matrix does not have full column rank.
    """

    def __init__(self, columns: typing.Sequence[str]):
        self.columns = list(columns)
        super().__init__(
            "rank-deficient design; collinear columns: " + ", ".join(self.columns)
        )


class PerfectSeparationError(EstimationError):
    """
    Raised when logistic coefficients diverge because the classes are
    perfectly separated.
    """

    def __init__(self, iteration: int):
        super().__init__(
            f"perfect separation detected at iteration {iteration}: coefficients are "
            "diverging. Use a positive l2 ridge penalty."
        )


class InsufficientDataError(EstimationError):
    """
    Raised when there is not enough (weighted) data for the requested fit.
    """

    def __init__(self, available: float, required: float, where: str = ""):
        self.available = available
        self.required = required
        super().__init__(
            f"insufficient data{' ' + where if where else ''}: "
            f"effective sample size {available:.4g}, need more than {required:.4g}"
        )


class EmptyBinError(EstimationError):
    """
    Raised when a bin is too small or has no treatment variation.
    """

    def __init__(self, bin_index: int, count: int, reason: str):
        self.bin_index = bin_index
        super().__init__(f"bin {bin_index + 1} ({count} observations): {reason}")


class SingleBinTestError(EstimationError):
    """
    Raised when the constancy test is requested with a single bin.
    """

    def __init__(self):
        super().__init__("test undefined for one bin: the Wald test needs at least two bins")


class OverlapFailureError(EstimationError):
    """
    Raised when treated and control units do not overlap enough to estimate.
    """

    def __init__(self, detail: str):
        super().__init__(f"overlap failure: {detail}")


class DegenerateFoldError(EstimationError):
    """
    Raised when a cross-fitting training fold holds a single treatment class.
    """

    def __init__(self, fold: int):
        self.fold = fold
        super().__init__(
            f"one-class treatment in the training data of fold {fold}; "
            "use fewer folds or check overlap"
        )


class BandwidthSelectionError(EstimationError):
    """
    Raised when every candidate bandwidth yields a degenerate fit.
    """

    def __init__(self, n_candidates: int):
        super().__init__(
            f"bandwidth selection failed: all {n_candidates} candidates gave degenerate fits"
        )


class BootstrapFailureError(EstimationError):
    """
    Raised when too few bootstrap replicates succeed.
    """

    def __init__(self, succeeded: int, attempted: int, required: int):
        super().__init__(
            f"only {succeeded} of {attempted} bootstrap fits succeeded; need at least {required}"
        )


class MonteCarloFailureError(EstimationError):
    """
    Raised when too many Monte Carlo replications fail.
    """

    def __init__(self, failures: typing.Dict[str, int], replications: int):
        self.failures = dict(failures)
        breakdown = ", ".join(f"{name}: {count}" for name, count in sorted(failures.items()))
        super().__init__(
            f"{sum(failures.values())} of {replications} replications failed ({breakdown})"
        )
