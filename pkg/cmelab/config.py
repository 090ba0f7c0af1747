"""
Run configuration shared by the config file and the command line.

Every RunConfig field is a YAML key and a `--key-with-dashes` flag. A resolved
config echoed next to a run's outputs re-runs it exactly.
"""
import dataclasses
import logging
import typing
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from . import constants
from .data import ColumnRoles, EstimationRequest
from .debiased import LearnerParams
from .exceptions import InvalidConfigError, ValidationError
from .parallel import default_threads
from .types import DgpName, Estimator, Kernel, Learner, MissingPolicy
from .utils import parse_enum, to_jsonable

logger = logging.getLogger(__name__)

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")
COMMANDS = ("estimate", "simulate", "benchmark", "diagnose")


@dataclass(frozen=True)
class RunConfig:
    """Everything a CLI run needs.

    Paths: `input` is the dataset CSV (estimate, diagnose); `output` is the
    directory every command writes into.
    """

    command: str = "estimate"
    input: typing.Optional[str] = None
    output: str = "."
    # Columns.
    outcome: str = "Y"
    treatment: str = "D"
    moderator: str = "X"
    covariates: typing.Tuple[str, ...] = ()
    missing_policy: MissingPolicy = MissingPolicy.REJECT
    treatment_binary: bool = False
    # Estimation.
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
    learner: Learner = Learner.LASSO_BASIS
    k_folds: int = constants.DEFAULT_K_FOLDS
    cv_folds: int = constants.DEFAULT_CV_FOLDS
    ridge: float = constants.DEFAULT_RIDGE
    trees_rounds: int = constants.TREES_ROUNDS
    trees_depth: int = constants.TREES_DEPTH
    trees_learning_rate: float = constants.TREES_LEARNING_RATE
    # Simulation.
    dgp: DgpName = DgpName.KEY_A1
    dgp_params: typing.Dict[str, float] = field(default_factory=dict)
    n: int = 1000
    replications: int = 200
    experimental: bool = False
    # Runtime.
    threads: typing.Optional[int] = None
    log_level: str = "WARNING"

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise InvalidConfigError("command", f"must be one of {', '.join(COMMANDS)}")
        object.__setattr__(
            self, "missing_policy", parse_enum(MissingPolicy, self.missing_policy, "missing_policy")
        )
        object.__setattr__(self, "estimator", parse_enum(Estimator, self.estimator, "estimator"))
        object.__setattr__(self, "kernel", parse_enum(Kernel, self.kernel, "kernel"))
        object.__setattr__(self, "learner", parse_enum(Learner, self.learner, "learner"))
        object.__setattr__(self, "dgp", parse_enum(DgpName, self.dgp, "dgp"))
        object.__setattr__(self, "covariates", tuple(self.covariates or ()))
        if self.grid is not None:
            object.__setattr__(self, "grid", tuple(float(g) for g in self.grid))
        object.__setattr__(self, "dgp_params", {str(k): float(v) for k, v in self.dgp_params.items()})
        object.__setattr__(self, "bandwidth", _parse_bandwidth(self.bandwidth))

        level = str(self.log_level).upper()
        if level not in LOG_LEVELS:
            raise InvalidConfigError("log_level", f"must be one of {', '.join(LOG_LEVELS)}")
        object.__setattr__(self, "log_level", level)
        if self.threads is not None and self.threads < 1:
            raise InvalidConfigError("threads", "must be at least 1")
        if self.n < 1:
            raise InvalidConfigError("n", "must be at least 1")
        if self.replications < 1:
            raise InvalidConfigError("replications", "must be at least 1")

    @classmethod
    def from_mapping(cls, values: typing.Mapping[str, typing.Any]) -> "RunConfig":
        """Builds a config from plain keys, rejecting unknown ones.

        Raises:
            InvalidConfigError: A key is unknown or a value is invalid.
        """
        known = {f.name for f in dataclasses.fields(cls)}
        for key in values:
            if key not in known:
                raise InvalidConfigError(str(key), "unknown configuration key")
        try:
            return cls(**dict(values))
        except (TypeError, ValueError) as error:
            raise InvalidConfigError("config", str(error))

    def merged(self, overrides: typing.Mapping[str, typing.Any]) -> "RunConfig":
        """
        Returns a copy with `overrides` applied on top of this config.
        """
        values = self.to_dict()
        values.update(overrides)
        return RunConfig.from_mapping(values)

    def to_dict(self) -> dict:
        values = {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}
        values["covariates"] = list(self.covariates)
        values["grid"] = None if self.grid is None else list(self.grid)
        return to_jsonable(values)

    def resolved(self) -> "RunConfig":
        """
        Fills the thread count from the environment so the echo is complete.
        """
        if self.threads is not None:
            return self
        return dataclasses.replace(self, threads=default_threads())

    def dump(self, path: typing.Union[str, Path]) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            yaml.safe_dump(self.to_dict(), handle, sort_keys=False)

    def roles(self) -> ColumnRoles:
        return ColumnRoles(self.outcome, self.treatment, self.moderator, self.covariates)

    def request(self) -> EstimationRequest:
        return EstimationRequest(
            estimator=self.estimator,
            grid=self.grid,
            grid_size=self.grid_size,
            bandwidth=self.bandwidth,
            kernel=self.kernel,
            n_bins=self.n_bins,
            bin_interacted_covariates=self.bin_interacted_covariates,
            n_boot=self.n_boot,
            confidence_level=self.confidence_level,
            seed=self.seed,
            trim_threshold=self.trim_threshold,
            treatment_binary=self.treatment_binary,
            learner=self.learner,
            k_folds=self.k_folds,
            cv_folds=self.cv_folds,
        )

    def learner_params(self) -> LearnerParams:
        return LearnerParams(
            ridge=self.ridge,
            trees_rounds=self.trees_rounds,
            trees_depth=self.trees_depth,
            trees_learning_rate=self.trees_learning_rate,
            cv_folds=self.cv_folds,
        )


def _parse_bandwidth(value: typing.Union[float, str]) -> typing.Union[float, str]:
    if isinstance(value, str):
        if value.strip().lower() == "auto":
            return "auto"
        try:
            return float(value)
        except ValueError:
            raise InvalidConfigError("bandwidth", "must be a positive number or 'auto'")
    return float(value)


def load_config(path: typing.Union[str, Path]) -> typing.Dict[str, typing.Any]:
    """Reads a YAML config file into a mapping of keys.

    Raises:
        ValidationError: The file is missing or is not a YAML mapping.
    """
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"config file not found: {path}")
    try:
        with open(path, encoding="utf-8") as handle:
            values = yaml.safe_load(handle)
    except yaml.YAMLError as error:
        raise ValidationError(f"config file {path} is not valid YAML: {error}")
    if values is None:
        return {}
    if not isinstance(values, dict):
        raise ValidationError(f"config file {path} must hold a mapping of keys")
    logger.debug("loaded %d keys from %s", len(values), path)
    return values
