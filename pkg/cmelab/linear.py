"""
The linear interaction estimator, the binning estimator and the Wald test for
a constant marginal effect.
"""
import logging
import typing
from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import constants
from .bootstrap import build_curve, normal_draws, pairs_bootstrap, sup_t_critical_value
from .data import CmeCurve, Dataset, make_grid, validate_grid
from .exceptions import EmptyBinError, RankDeficiencyError, SingleBinTestError, ValidationError
from .numerics import WlsFit, wls
from .types import Estimator
from .utils import as_float_array

logger = logging.getLogger(__name__)


def _resolve_grid(dataset: Dataset, grid: typing.Optional[typing.Any]) -> np.ndarray:
    return make_grid(dataset) if grid is None else validate_grid(dataset, grid)


def fit_linear_interaction(dataset: Dataset) -> WlsFit:
    """Fits Y = b0 + b1 D + b2 X + b3 DX + gZ by OLS with HC1 errors.

    Coefficients are labelled "const", "D", "X", "D:X" and the covariate names.

    Raises:
        RankDeficiencyError: The design (1, D, X, DX, Z) lacks full rank.
    """
    d, x = dataset.treatment, dataset.moderator
    design = np.column_stack([np.ones(dataset.n), d, x, d * x, dataset.covariates])
    labels = ("const", "D", "X", "D:X", *dataset.covariate_names)
    return wls(design, dataset.outcome, labels=labels)


def _linear_effect(fit: WlsFit, grid: np.ndarray) -> typing.Tuple[np.ndarray, np.ndarray]:
    # theta(x) = b1 + b3 x; delta-method variance from the robust covariance.
    b1, b3 = fit.coefficients[1], fit.coefficients[3]
    V = fit.covariance
    theta = b1 + b3 * grid
    variance = V[1, 1] + 2 * grid * V[1, 3] + grid**2 * V[3, 3]
    return theta, np.sqrt(np.clip(variance, 0.0, None))


def estimate_linear(
    dataset: Dataset,
    grid: typing.Optional[typing.Any] = None,
    n_boot: int = constants.DEFAULT_N_BOOT,
    level: float = constants.DEFAULT_CONFIDENCE_LEVEL,
    seed: int = constants.DEFAULT_SEED,
    n_jobs: typing.Optional[int] = None,
) -> CmeCurve:
    """The marginal effect b1 + b3 x of the linear interaction model.

    Pointwise intervals are normal-based on delta-method errors; the uniform
    band comes from the pairs bootstrap sup-t value.
    """
    grid = _resolve_grid(dataset, grid)
    fit = fit_linear_interaction(dataset)
    theta, se = _linear_effect(fit, grid)
    trimmed = np.zeros(grid.shape[0], dtype=bool)

    critical = None
    if n_boot > 0:

        def refit(indices: np.ndarray) -> np.ndarray:
            return _linear_effect(fit_linear_interaction(dataset.take(indices)), grid)[0]

        draws = pairs_bootstrap(dataset.n, n_boot, seed, refit, n_jobs)
        critical = sup_t_critical_value(theta, se, draws, ~trimmed, level)

    metadata = {
        "estimator": Estimator.LINEAR.value,
        "bandwidth": None,
        "seed": seed,
        "n": dataset.n,
        "n_boot": n_boot,
        "coefficients": dict(zip(fit.labels, fit.coefficients.tolist())),
    }
    return build_curve(grid, theta, se, trimmed, level, critical, metadata)


@dataclass(frozen=True)
class BinSpec:
    """Bins of the moderator: (-inf, c1], (c1, c2], ..., (c_{G-1}, inf),
    evaluated at the within-bin medians.

    Build one with `BinSpec.quantiles` or `BinSpec.from_cuts`; cut points
    outside the observed range are dropped since they would only create empty
    edge bins.
    """

    n_bins: int
    cut_points: np.ndarray
    eval_points: np.ndarray

    @classmethod
    def from_cuts(cls, moderator: typing.Any, cut_points: typing.Any) -> "BinSpec":
        """
        Bins a moderator at the given cut points.
        """
        x = as_float_array(moderator).ravel()
        cuts = as_float_array(cut_points).ravel()
        if cuts.size > 1 and np.any(np.diff(cuts) <= 0):
            raise ValidationError("cut points must be strictly increasing")
        cuts = cuts[(cuts > x.min()) & (cuts < x.max())]
        bins = np.searchsorted(cuts, x, side="left")
        eval_points = np.array(
            [
                np.median(x[bins == g]) if np.any(bins == g) else np.nan
                for g in range(cuts.size + 1)
            ]
        )
        return cls(n_bins=cuts.size + 1, cut_points=cuts, eval_points=eval_points)

    @classmethod
    def quantiles(
        cls, moderator: typing.Any, n_bins: int = constants.DEFAULT_N_BINS
    ) -> "BinSpec":
        """
        Equal-mass bins: cut points at the 1/G, ..., (G-1)/G quantiles.
        """
        if n_bins < 1:
            raise ValidationError("n_bins must be at least 1")
        x = as_float_array(moderator).ravel()
        cuts = np.quantile(x, np.arange(1, n_bins) / n_bins)
        if cuts.size > 1 and np.any(np.diff(cuts) <= 0):
            raise ValidationError(
                f"the moderator has too many ties for {n_bins} quantile bins"
            )
        return cls.from_cuts(x, cuts)

    def assign(self, moderator: np.ndarray) -> np.ndarray:
        """
        Returns the bin index of every observation.
        """
        return np.searchsorted(self.cut_points, moderator, side="left")


@dataclass(frozen=True)
class _BinFit:
    theta: np.ndarray
    covariance: np.ndarray
    fit: WlsFit


def _fit_bins(dataset: Dataset, spec: BinSpec, interacted_covariates: bool) -> _BinFit:
    x, d = dataset.moderator, dataset.treatment
    bins = spec.assign(x)
    min_count = max(constants.MIN_BIN_COUNT, dataset.p + 4)

    columns, labels = [], []
    for g in range(spec.n_bins):
        member = bins == g
        count = int(member.sum())
        if count < min_count:
            raise EmptyBinError(g, count, f"needs at least {min_count} observations")
        if np.ptp(d[member]) == 0:
            raise EmptyBinError(g, count, "no treatment variation")
        indicator = member.astype(float)
        centred = x - spec.eval_points[g]
        name = f"bin{g + 1}"
        columns += [indicator, indicator * d, indicator * centred, indicator * d * centred]
        labels += [name, f"{name}:D", f"{name}:X", f"{name}:D:X"]
        if interacted_covariates:
            for j, z_name in enumerate(dataset.covariate_names):
                columns.append(indicator * dataset.covariates[:, j])
                labels.append(f"{name}:{z_name}")

    if not interacted_covariates:
        columns += list(dataset.covariates.T)
        labels += list(dataset.covariate_names)

    fit = wls(np.column_stack(columns), dataset.outcome, labels=labels)
    index = [fit.index(f"bin{g + 1}:D") for g in range(spec.n_bins)]
    return _BinFit(
        theta=fit.coefficients[index],
        covariance=fit.covariance[np.ix_(index, index)],
        fit=fit,
    )


def estimate_binning(
    dataset: Dataset,
    spec: typing.Optional[BinSpec] = None,
    interacted_covariates: bool = False,
    n_boot: int = constants.DEFAULT_N_BOOT,
    level: float = constants.DEFAULT_CONFIDENCE_LEVEL,
    seed: int = constants.DEFAULT_SEED,
) -> CmeCurve:
    """The binning estimator.

    One regression holds, per bin, an intercept, a D slope, an (X - x_g)
    slope and a D (X - x_g) interaction; covariates enter with common
    coefficients unless `interacted_covariates` is set. The curve is the per-bin
    D coefficient at the within-bin median. The uniform band takes its sup-t
    value from `n_boot` draws of the bin coefficients' joint normal.

    Raises:
        EmptyBinError: A bin is too small or has no treatment variation.
    """
    spec = spec or BinSpec.quantiles(dataset.moderator)
    result = _fit_bins(dataset, spec, interacted_covariates)
    se = np.sqrt(np.clip(np.diag(result.covariance), 0.0, None))
    trimmed = np.zeros(spec.n_bins, dtype=bool)

    critical = None
    if n_boot > 0:
        draws = result.theta + normal_draws(result.covariance, n_boot, seed)
        critical = sup_t_critical_value(result.theta, se, draws, ~trimmed, level)

    metadata = {
        "estimator": Estimator.BINNING.value,
        "bandwidth": None,
        "seed": seed,
        "n": dataset.n,
        "n_boot": n_boot,
        "n_bins": spec.n_bins,
        "cut_points": spec.cut_points.tolist(),
        "interacted_covariates": interacted_covariates,
    }
    return build_curve(spec.eval_points, result.theta, se, trimmed, level, critical, metadata)


class WaldTest(typing.NamedTuple):
    statistic: float
    p_value: float
    df: int


def wald_statistic(
    difference: np.ndarray, middle: np.ndarray, labels: typing.Sequence[str]
) -> float:
    """
    The quadratic form d' V^-1 d. A singular V names the contrasts in `labels`.
    """
    try:
        return float(difference @ np.linalg.solve(middle, difference))
    except np.linalg.LinAlgError:
        raise RankDeficiencyError(labels)


def wald_constancy_test(
    dataset: Dataset,
    spec: typing.Optional[BinSpec] = None,
    interacted_covariates: bool = False,
) -> WaldTest:
    """Tests that every bin has the same marginal effect.

    The statistic is the Wald form of theta_g - theta_1 = 0 for g >= 2 under the
    joint robust covariance, referred to a chi-square with G - 1 degrees of
    freedom.

    Raises:
        SingleBinTestError: The bin layout has a single bin.
        EmptyBinError: As in `estimate_binning`.
        RankDeficiencyError: The covariance of the contrasts is singular.
    """
    spec = spec or BinSpec.quantiles(dataset.moderator)
    if spec.n_bins < 2:
        raise SingleBinTestError()
    result = _fit_bins(dataset, spec, interacted_covariates)
    contrast = np.column_stack([-np.ones(spec.n_bins - 1), np.eye(spec.n_bins - 1)])
    difference = contrast @ result.theta
    middle = contrast @ result.covariance @ contrast.T
    labels = [f"bin{g + 2}:D - bin1:D" for g in range(spec.n_bins - 1)]
    statistic = wald_statistic(difference, middle, labels)
    df = spec.n_bins - 1
    p_value = float(stats.chi2.sf(statistic, df))
    logger.info("Wald constancy test: W=%.4f, df=%d, p=%.4g", statistic, df, p_value)
    return WaldTest(statistic, p_value, df)
