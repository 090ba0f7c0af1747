"""
Sup-t confidence bands and curve assembly shared by every estimator.

Uniform bands use the critical value c* = level-quantile of
max_k |theta*_b(x_k) - theta(x_k)| / se(x_k) over the non-trimmed points, where
theta*_b comes either from a pairs bootstrap or from draws of the estimator's
joint normal approximation.
"""
import logging
import typing

import numpy as np
from scipy import stats

from . import constants
from .data import CmeCurve
from .exceptions import BootstrapFailureError, EstimationError
from .numerics import rng_stream
from .parallel import run_tasks
from .types import Stream

logger = logging.getLogger(__name__)


def normal_critical_value(level: float) -> float:
    """
    The two-sided standard normal quantile z_{(1 + level) / 2}.
    """
    return float(stats.norm.ppf((1 + level) / 2))


def pairs_bootstrap(
    n: int,
    n_boot: int,
    seed: int,
    refit: typing.Callable[[np.ndarray], np.ndarray],
    n_jobs: typing.Optional[int] = None,
) -> np.ndarray:
    """Re-estimates a curve on `n_boot` row resamples.

    Replicate b resamples rows with the generator rng_stream(seed, b), so the
    draws do not depend on the thread count. A replicate whose refit raises an
    estimation error becomes a row of NaN.

    Args:
        n (int): Number of rows in the original sample.
        n_boot (int): Number of replicates.
        seed (int): Bootstrap seed.
        refit (typing.Callable[[np.ndarray], np.ndarray]): Maps resampled row
            indices to the curve estimate on the grid.

    Returns:
        np.ndarray: An n_boot x grid-length array.
    """

    def replicate(b: int) -> typing.Optional[np.ndarray]:
        indices = rng_stream(seed, b, Stream.BOOTSTRAP).integers(0, n, size=n)
        try:
            return np.asarray(refit(indices), dtype=float)
        except EstimationError as error:
            logger.debug("bootstrap replicate %d failed: %s", b, error)
            return None

    results = run_tasks(replicate, n_boot, n_jobs)
    width = next((r.shape[0] for r in results if r is not None), 0)
    draws = np.full((n_boot, width), np.nan)
    for b, result in enumerate(results):
        if result is not None:
            draws[b] = result
    return draws


def sup_t_critical_value(
    estimate: np.ndarray,
    std_error: np.ndarray,
    draws: np.ndarray,
    valid: np.ndarray,
    level: float,
    min_successes: int = constants.MIN_BOOTSTRAP_SUCCESSES,
) -> float:
    """The sup-t critical value over the `valid` grid points.

    Draws with a missing value at any valid point count as failed fits. The
    result never falls below the pointwise normal quantile, so the uniform
    band always contains the pointwise band.

    Raises:
        BootstrapFailureError: Fewer than `min_successes` usable draws.
    """
    valid = valid & (std_error > 0) & np.isfinite(std_error)
    z = normal_critical_value(level)
    if not valid.any():
        return z
    if draws.ndim != 2 or draws.shape[1] != valid.shape[0]:
        raise BootstrapFailureError(0, draws.shape[0], min_successes)
    subset = draws[:, valid]
    usable = np.all(np.isfinite(subset), axis=1)
    succeeded = int(usable.sum())
    if succeeded < min_successes:
        raise BootstrapFailureError(succeeded, draws.shape[0], min_successes)
    if succeeded < draws.shape[0]:
        logger.warning("%d of %d bootstrap fits failed", draws.shape[0] - succeeded, draws.shape[0])

    deviations = np.abs(subset[usable] - estimate[valid]) / std_error[valid]
    statistics = deviations.max(axis=1)
    critical = float(np.quantile(statistics, level))
    logger.info("sup-t critical value %.4f from %d draws (pointwise %.4f)", critical, succeeded, z)
    return max(critical, z)


def normal_draws(
    covariance: np.ndarray, n_draws: int, seed: int
) -> np.ndarray:
    """
    Draws from N(0, covariance) on a dedicated stream, for sup-t values from
    an estimator's joint normal approximation.
    """
    rng = rng_stream(seed, 0, Stream.NORMAL_DRAWS)
    k = covariance.shape[0]
    values, vectors = np.linalg.eigh((covariance + covariance.T) / 2)
    root = vectors * np.sqrt(np.clip(values, 0.0, None))
    return rng.standard_normal((n_draws, k)) @ root.T


def build_curve(
    grid: np.ndarray,
    estimate: np.ndarray,
    std_error: np.ndarray,
    trimmed: np.ndarray,
    level: float,
    uniform_critical: typing.Optional[float],
    metadata: typing.Dict[str, typing.Any],
) -> CmeCurve:
    """
    Assembles a CmeCurve: pointwise intervals estimate +/- z * se and, when a
    sup-t value is given, uniform intervals estimate +/- c* * se. Trimmed
    points are blanked to NaN.
    """
    trimmed = np.asarray(trimmed, dtype=bool).copy()
    estimate = np.where(trimmed, np.nan, estimate).astype(float)
    std_error = np.where(trimmed, np.nan, std_error).astype(float)
    z = normal_critical_value(level)
    pointwise = (estimate - z * std_error, estimate + z * std_error)
    uniform = None
    if uniform_critical is not None:
        uniform = (
            estimate - uniform_critical * std_error,
            estimate + uniform_critical * std_error,
        )
    metadata = dict(metadata)
    metadata.setdefault("confidence_level", level)
    metadata["uniform_critical_value"] = uniform_critical
    return CmeCurve(
        grid=np.asarray(grid, dtype=float).copy(),
        estimate=estimate,
        std_error=std_error,
        ci_pointwise=pointwise,
        ci_uniform=uniform,
        trimmed=trimmed,
        metadata=metadata,
    )
