"""
Monte Carlo benchmarks: bias, RMSE, coverage and test size of an estimator on
a data-generating process with a known conditional marginal effect.
"""
import dataclasses
import json
import logging
import time
import typing
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import dateutil.parser
import numpy as np
import pandas as pd

from . import constants
from .data import EstimationRequest
from .debiased import LearnerParams
from .dgp import DgpSpec, cme_oracle, sample
from .estimate import estimate
from .exceptions import (
    CmeLabError,
    MonteCarloFailureError,
    OracleUnavailableError,
    ValidationError,
)
from .linear import BinSpec, wald_constancy_test
from .numerics import derive_seed
from .parallel import default_threads, run_tasks
from .types import Estimator
from .utils import from_jsonable, to_jsonable

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RuntimeStats:
    """Wall-clock facts about a run. Not part of the deterministic payload."""

    started_at: datetime
    seconds: float
    threads: int

    def to_dict(self) -> dict:
        return {
            "started_at": self.started_at.isoformat(),
            "seconds": self.seconds,
            "threads": self.threads,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RuntimeStats":
        return cls(
            started_at=dateutil.parser.isoparse(data["started_at"]),
            seconds=float(data["seconds"]),
            threads=int(data["threads"]),
        )


@dataclass(frozen=True)
class McReport:
    """Summaries of R replications of one (process, estimator) pair.

    Grid vectors are indexed by grid position. Each replication evaluates its
    own grid (for binning, its own bin medians) and errors are taken against
    the oracle at those points; `grid` reports the average point. Only
    non-trimmed points enter bias, RMSE and coverage.

    Props:
        coverage_pointwise (np.ndarray): Share of replications whose pointwise
                                         interval covers the oracle.
        coverage_uniform (float):        Share whose uniform band covers the
                                         oracle at every non-trimmed point.
                                         None without a bootstrap.
        rejection_rate (float):          Share of replications in which the
                                         constancy test rejected at 5%. Binning
                                         only.
        failures (dict):                 Failed replications by error type.
    """

    dgp: str
    estimator: str
    n: int
    replications: int
    seed: int
    grid: np.ndarray
    oracle: np.ndarray
    mean_estimate: np.ndarray
    bias: np.ndarray
    rmse: np.ndarray
    coverage_pointwise: np.ndarray
    coverage_uniform: typing.Optional[float]
    rejection_rate: typing.Optional[float]
    failures: typing.Dict[str, int] = field(default_factory=dict)
    runtime: typing.Optional[RuntimeStats] = field(default=None, compare=False)

    def __post_init__(self):
        if self.replications < 1:
            raise ValidationError("a report needs at least one replication")
        k = self.grid.shape[0]
        vectors = [self.oracle, self.mean_estimate, self.bias, self.rmse, self.coverage_pointwise]
        if any(v.shape != (k,) for v in vectors):
            raise ValueError("every McReport vector must match the grid length")

    @property
    def successes(self) -> int:
        return self.replications - sum(self.failures.values())

    def to_dict(self) -> dict:
        """
        The deterministic payload. Runtime statistics are left out so repeated
        runs serialize identically.
        """
        return to_jsonable(
            {
                "dgp": self.dgp,
                "estimator": self.estimator,
                "n": self.n,
                "replications": self.replications,
                "seed": self.seed,
                "grid": self.grid,
                "oracle": self.oracle,
                "mean_estimate": self.mean_estimate,
                "bias": self.bias,
                "rmse": self.rmse,
                "coverage_pointwise": self.coverage_pointwise,
                "coverage_uniform": self.coverage_uniform,
                "rejection_rate": self.rejection_rate,
                "failures": self.failures,
            }
        )

    @classmethod
    def from_dict(cls, data: dict, runtime: typing.Optional[dict] = None) -> "McReport":
        return cls(
            dgp=data["dgp"],
            estimator=data["estimator"],
            n=int(data["n"]),
            replications=int(data["replications"]),
            seed=int(data["seed"]),
            grid=from_jsonable(data["grid"]),
            oracle=from_jsonable(data["oracle"]),
            mean_estimate=from_jsonable(data["mean_estimate"]),
            bias=from_jsonable(data["bias"]),
            rmse=from_jsonable(data["rmse"]),
            coverage_pointwise=from_jsonable(data["coverage_pointwise"]),
            coverage_uniform=data.get("coverage_uniform"),
            rejection_rate=data.get("rejection_rate"),
            failures={str(k): int(v) for k, v in data.get("failures", {}).items()},
            runtime=RuntimeStats.from_dict(runtime) if runtime else None,
        )

    def to_json(self, path: typing.Optional[typing.Union[str, Path]] = None) -> str:
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            Path(path).write_text(text + "\n", encoding="utf-8")
        return text

    def to_frame(self) -> pd.DataFrame:
        """
        The flat table: one row per grid point, scalars repeated on every row.
        """
        return pd.DataFrame(
            {
                "dgp": self.dgp,
                "estimator": self.estimator,
                "n": self.n,
                "replications": self.replications,
                "x": self.grid,
                "oracle": self.oracle,
                "mean_estimate": self.mean_estimate,
                "bias": self.bias,
                "rmse": self.rmse,
                "coverage_pointwise": self.coverage_pointwise,
                "coverage_uniform": self.coverage_uniform,
                "rejection_rate": self.rejection_rate,
            }
        )

    def to_csv(self, path: typing.Union[str, Path]) -> None:
        self.to_frame().to_csv(path, index=False, float_format="%.17g")


@dataclass(frozen=True)
class _Replication:
    grid: np.ndarray
    estimate: np.ndarray
    oracle: np.ndarray
    covered: np.ndarray
    uniform_covered: typing.Optional[bool]
    trimmed: np.ndarray
    rejected: typing.Optional[bool]


def _nanmean(values: np.ndarray) -> np.ndarray:
    counts = np.sum(~np.isnan(values), axis=0)
    totals = np.nansum(values, axis=0)
    return np.where(counts > 0, totals / np.maximum(counts, 1), np.nan)


def run_mc(
    dgp: DgpSpec,
    request: EstimationRequest,
    n: int,
    replications: int,
    seed: int = constants.DEFAULT_SEED,
    n_jobs: typing.Optional[int] = None,
    params: LearnerParams = LearnerParams(),
) -> McReport:
    """Runs `replications` independent draw-and-estimate cycles.

    Replication r samples with seed_r = derive_seed(seed, r) and estimates with
    the request's settings at seed seed_r, so a single replication matches a
    direct `estimate(sample(dgp, n, seed_r), request)` call. Replications run
    in parallel; results are gathered by index, so the report does not depend
    on the thread count.

    Raises:
        OracleUnavailableError: The process has no CME oracle.
        MonteCarloFailureError: More than 20% of replications failed.
    """
    if not dgp.has_oracle:
        raise OracleUnavailableError(dgp.name.value, "cme")
    if replications < 1:
        raise ValidationError("replications must be at least 1")
    binning = request.estimator is Estimator.BINNING
    threads = default_threads() if n_jobs is None else max(int(n_jobs), 1)
    started_at = datetime.now(timezone.utc)
    clock = time.perf_counter()

    def replicate(r: int) -> typing.Union[_Replication, str]:
        seed_r = derive_seed(seed, r)
        try:
            dataset = sample(dgp, n, seed_r, n_jobs=1)
            curve = estimate(
                dataset, dataclasses.replace(request, seed=seed_r), n_jobs=1, params=params
            )
            rejected = None
            if binning:
                spec = BinSpec.quantiles(dataset.moderator, request.n_bins)
                test = wald_constancy_test(dataset, spec, request.bin_interacted_covariates)
                rejected = test.p_value < constants.TEST_LEVEL
        except CmeLabError as error:
            logger.debug("replication %d failed: %s", r, error)
            return type(error).__name__

        oracle = np.asarray(cme_oracle(dgp, curve.grid), dtype=float)
        valid = curve.valid
        lower, upper = curve.ci_pointwise
        covered = (lower <= oracle) & (oracle <= upper)
        uniform_covered = None
        if curve.ci_uniform is not None and valid.any():
            u_lower, u_upper = curve.ci_uniform
            uniform_covered = bool(
                np.all((u_lower[valid] <= oracle[valid]) & (oracle[valid] <= u_upper[valid]))
            )
        if (r + 1) % 50 == 0:
            logger.info("finished replication %d of %d", r + 1, replications)
        return _Replication(
            grid=curve.grid,
            estimate=curve.estimate,
            oracle=oracle,
            covered=covered,
            uniform_covered=uniform_covered,
            trimmed=curve.trimmed,
            rejected=rejected,
        )

    results = run_tasks(replicate, replications, threads)
    failures: typing.Dict[str, int] = {}
    for result in results:
        if isinstance(result, str):
            failures[result] = failures.get(result, 0) + 1
    failed = sum(failures.values())
    if failed > constants.MAX_FAILURE_RATE * replications:
        raise MonteCarloFailureError(failures, replications)
    if failed:
        logger.warning("%d of %d replications failed: %s", failed, replications, failures)

    done = [r for r in results if not isinstance(r, str)]
    widths = {r.grid.shape[0] for r in done}
    if len(widths) != 1:
        raise ValidationError("replications produced grids of different lengths")

    grids = np.array([r.grid for r in done])
    trimmed = np.array([r.trimmed for r in done])
    estimates = np.where(trimmed, np.nan, np.array([r.estimate for r in done]))
    oracles = np.array([r.oracle for r in done])
    errors = estimates - oracles
    covered = np.where(trimmed, np.nan, np.array([r.covered for r in done], dtype=float))

    uniform = [r.uniform_covered for r in done if r.uniform_covered is not None]
    rejections = [r.rejected for r in done if r.rejected is not None]
    report = McReport(
        dgp=dgp.name.value,
        estimator=request.estimator.value,
        n=n,
        replications=replications,
        seed=seed,
        grid=grids.mean(axis=0),
        oracle=_nanmean(oracles),
        mean_estimate=_nanmean(estimates),
        bias=_nanmean(errors),
        rmse=np.sqrt(_nanmean(errors**2)),
        coverage_pointwise=_nanmean(covered),
        coverage_uniform=float(np.mean(uniform)) if uniform else None,
        rejection_rate=float(np.mean(rejections)) if rejections else None,
        failures=failures,
        runtime=RuntimeStats(
            started_at=started_at, seconds=time.perf_counter() - clock, threads=threads
        ),
    )
    logger.info(
        "%s on %s: uniform coverage %s over %d replications",
        report.estimator,
        report.dgp,
        report.coverage_uniform,
        replications,
    )
    return report
