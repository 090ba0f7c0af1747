"""
Local-linear kernel estimation of the conditional marginal effect.

At every evaluation point x0 the estimator solves a kernel-weighted least
squares problem of Y on {1, D, X - x0, D (X - x0), Z} and reads the marginal
effect off the D coefficient. `LocalLinearProblem` generalises that layout so
the debiased estimators can smooth pseudo-outcomes and residuals with the same
machinery, bandwidth selection and bootstrap.
"""
import dataclasses
import logging
import typing
from dataclasses import dataclass

import numpy as np

from . import constants
from .bootstrap import build_curve, pairs_bootstrap, sup_t_critical_value
from .data import CmeCurve, Dataset, make_grid, validate_grid
from .exceptions import (
    BandwidthSelectionError,
    InsufficientDataError,
    RankDeficiencyError,
    ValidationError,
)
from .numerics import fold_assignment, wls
from .types import Estimator, Kernel
from .utils import as_float_array, parse_enum

logger = logging.getLogger(__name__)


def kernel_weights(u: np.ndarray, kernel: Kernel) -> np.ndarray:
    """Kernel weights at scaled distances u = (X - x0) / h, scaled to K(0) = 1.

    Args:
        u (np.ndarray): Scaled distances.
        kernel (Kernel): The kernel.
    """
    if kernel is Kernel.EPANECHNIKOV:
        return np.where(np.abs(u) < 1, 1.0 - u**2, 0.0)
    if kernel is Kernel.UNIFORM:
        return (np.abs(u) <= 1).astype(float)
    return np.exp(-0.5 * u**2)


@dataclass(frozen=True)
class KernelSpec:
    """How the local fits weight observations.

    Args:
        kernel (Kernel, optional): Defaults to Epanechnikov.
        bandwidth (float, optional): A positive bandwidth, or None to select
                                     one by cross-validation.
        cv_folds (int, optional): Folds for bandwidth selection.
        bandwidth_grid (typing.Sequence[float], optional): Candidate
            bandwidths. Defaults to 20 log-spaced values over
            [0.05, 2] x sd(X).
    """

    kernel: Kernel = Kernel.EPANECHNIKOV
    bandwidth: typing.Optional[float] = None
    cv_folds: int = constants.DEFAULT_CV_FOLDS
    bandwidth_grid: typing.Optional[typing.Tuple[float, ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "kernel", parse_enum(Kernel, self.kernel, "kernel"))
        if isinstance(self.bandwidth, str):
            if self.bandwidth != "auto":
                raise ValidationError("bandwidth must be a positive number or 'auto'")
            object.__setattr__(self, "bandwidth", None)
        if self.bandwidth is not None and not self.bandwidth > 0:
            raise ValidationError("bandwidth must be positive")
        if self.cv_folds < 2:
            raise ValidationError("cv_folds must be at least 2")
        if self.bandwidth_grid is not None:
            grid = np.asarray(self.bandwidth_grid, dtype=float)
            if grid.size == 0 or np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
                raise ValidationError("bandwidth_grid must be positive and strictly increasing")
            object.__setattr__(self, "bandwidth_grid", tuple(grid.tolist()))

    def candidates(self, moderator: np.ndarray) -> np.ndarray:
        if self.bandwidth_grid is not None:
            return np.asarray(self.bandwidth_grid)
        low, high = constants.BANDWIDTH_GRID_RANGE
        return np.geomspace(low, high, constants.BANDWIDTH_GRID_SIZE) * np.std(moderator)

    def with_bandwidth(self, bandwidth: float) -> "KernelSpec":
        return dataclasses.replace(self, bandwidth=float(bandwidth))


@dataclass(frozen=True)
class LocalFit:
    """
    One local-linear fit: the target coefficient, its robust standard error,
    the kernel effective sample size and every local coefficient.
    """

    theta: float
    se: float
    effective_n: float
    coefficients: np.ndarray


@dataclass(frozen=True)
class CurveFit:
    theta: np.ndarray
    se: np.ndarray
    effective_n: np.ndarray
    trimmed: np.ndarray


class LocalLinearProblem:
    """A local-linear regression in the moderator.

    The local design at x0 is, in order: an intercept, X - x0 (when
    `moderator_trend`), the treatment and treatment * (X - x0) (when a
    treatment is given), then the covariates. The target is the treatment
    coefficient, or the intercept when there is no treatment.
    """

    def __init__(
        self,
        moderator: np.ndarray,
        response: np.ndarray,
        treatment: typing.Optional[np.ndarray] = None,
        covariates: typing.Optional[np.ndarray] = None,
        moderator_trend: bool = True,
    ) -> None:
        self.moderator = as_float_array(moderator).ravel()
        self.response = as_float_array(response).ravel()
        self.treatment = None if treatment is None else as_float_array(treatment).ravel()
        n = self.moderator.shape[0]
        if covariates is None or as_float_array(covariates).size == 0:
            self.covariates = np.empty((n, 0))
        else:
            self.covariates = as_float_array(covariates, ndim=2)
        self.moderator_trend = moderator_trend

        self.labels = ["const"]
        if moderator_trend:
            self.labels.append("X")
        if self.treatment is not None:
            self.labels += ["D", "D:X"]
        self.labels += [f"Z{j + 1}" for j in range(self.covariates.shape[1])]
        self.target = self.labels.index("D") if self.treatment is not None else 0
        self._treatment_scale = (
            float(np.var(self.treatment)) if self.treatment is not None else 0.0
        )

    @classmethod
    def for_dataset(cls, dataset: Dataset) -> "LocalLinearProblem":
        """
        The marginal-effect problem: Y on {1, X - x0, D, D (X - x0), Z}.
        """
        return cls(
            dataset.moderator,
            dataset.outcome,
            treatment=dataset.treatment,
            covariates=dataset.covariates,
        )

    @property
    def n(self) -> int:
        return self.moderator.shape[0]

    @property
    def n_regressors(self) -> int:
        return len(self.labels)

    def take(self, indices: np.ndarray) -> "LocalLinearProblem":
        return LocalLinearProblem(
            self.moderator[indices],
            self.response[indices],
            treatment=None if self.treatment is None else self.treatment[indices],
            covariates=self.covariates[indices],
            moderator_trend=self.moderator_trend,
        )

    def design(self, rows: np.ndarray, centre: typing.Union[float, np.ndarray]) -> np.ndarray:
        """
        The local design for `rows`, with the moderator centred at `centre`
        (a scalar, or one value per row).
        """
        centred = self.moderator[rows] - centre
        columns = [np.ones(centred.shape[0])]
        if self.moderator_trend:
            columns.append(centred)
        if self.treatment is not None:
            d = self.treatment[rows]
            columns += [d, d * centred]
        columns += list(self.covariates[rows].T)
        return np.column_stack(columns)

    def fit(self, x0: float, bandwidth: float, kernel: Kernel) -> LocalFit:
        """Solves the kernel-weighted least squares problem at x0.

        Raises:
            InsufficientDataError: The effective sample size does not exceed
                                   the number of regressors.
            RankDeficiencyError: The local design is (nearly) collinear,
                                 including a treatment without variation in
                                 the window.
        """
        weights = kernel_weights((self.moderator - x0) / bandwidth, kernel)
        effective_n = float(weights.sum())
        if effective_n <= self.n_regressors:
            raise InsufficientDataError(effective_n, self.n_regressors, f"at x0={x0:.4g}")
        rows = np.flatnonzero(weights > 0)
        w = weights[rows]

        if self.treatment is not None:
            d = self.treatment[rows]
            mean = np.average(d, weights=w)
            local_variance = np.average((d - mean) ** 2, weights=w)
            if local_variance <= 1e-8 * max(self._treatment_scale, 1e-300):
                raise RankDeficiencyError(["D"])

        result = wls(self.design(rows, x0), self.response[rows], w, labels=self.labels)
        return LocalFit(
            theta=float(result.coefficients[self.target]),
            se=float(result.std_errors[self.target]),
            effective_n=effective_n,
            coefficients=result.coefficients,
        )

    def fit_curve(
        self,
        grid: np.ndarray,
        bandwidth: float,
        kernel: Kernel,
        min_effective_n: float = 0.0,
        skip: typing.Optional[np.ndarray] = None,
    ) -> CurveFit:
        """Fits every grid point. Points whose effective sample size falls
        below `min_effective_n`, or whose fit is degenerate, are trimmed.
        Points flagged in `skip` are trimmed without fitting.
        """
        k = grid.shape[0]
        theta = np.full(k, np.nan)
        se = np.full(k, np.nan)
        effective_n = np.zeros(k)
        trimmed = np.zeros(k, dtype=bool) if skip is None else skip.copy()
        for i, x0 in enumerate(grid):
            if trimmed[i]:
                continue
            effective_n[i] = kernel_weights((self.moderator - x0) / bandwidth, kernel).sum()
            if effective_n[i] < min_effective_n:
                trimmed[i] = True
                logger.debug("trimmed x0=%.4g: effective n %.2f", x0, effective_n[i])
                continue
            try:
                local = self.fit(x0, bandwidth, kernel)
            except (InsufficientDataError, RankDeficiencyError) as error:
                trimmed[i] = True
                logger.debug("trimmed x0=%.4g: %s", x0, error)
                continue
            theta[i], se[i] = local.theta, local.se
        return CurveFit(theta=theta, se=se, effective_n=effective_n, trimmed=trimmed)

    def _centring(self, centres: np.ndarray) -> np.ndarray:
        """
        Matrices A(x0), one per centre, mapping a row of the design centred at
        0 to the same row centred at x0.
        """
        k = self.n_regressors
        shift = np.broadcast_to(np.eye(k), (centres.shape[0], k, k)).copy()
        if self.moderator_trend:
            shift[:, self.labels.index("X"), 0] = -centres
        if self.treatment is not None:
            shift[:, self.labels.index("D:X"), self.labels.index("D")] = -centres
        return shift

    def held_out_predictions(
        self,
        train: "LocalLinearProblem",
        test: np.ndarray,
        bandwidth: float,
        kernel: Kernel,
        block: int = constants.CV_BLOCK_SIZE,
    ) -> np.ndarray:
        """Predicts `response[test]`, each row from the local fit of `train` at
        x0 = its own moderator value.

        Local normal equations come from weighted moments of the design
        centred at 0, recentred per point. Points whose fit is near a
        degeneracy boundary are refitted with `fit`, so the result and the
        errors raised match fitting every point with `fit`.

        Raises:
            InsufficientDataError: Some held-out point has too little data.
            RankDeficiencyError: Some held-out point has a collinear design.
        """
        k = self.n_regressors
        base = train.design(np.arange(train.n), 0.0)
        outer = (base[:, :, None] * base[:, None, :]).reshape(train.n, k * k)
        cross = base * train.response[:, None]
        target_d = self.labels.index("D") if self.treatment is not None else None

        predictions = np.empty(test.shape[0])
        for start in range(0, test.shape[0], block):
            rows = test[start : start + block]
            centres = self.moderator[rows]
            distances = (train.moderator[None, :] - centres[:, None]) / bandwidth
            weights = kernel_weights(distances, kernel)
            effective_n = weights.sum(axis=1)
            gram = (weights @ outer).reshape(-1, k, k)
            moments = weights @ cross

            clear = effective_n > k * (1 + 1e-9)
            if target_d is not None:
                with np.errstate(divide="ignore", invalid="ignore"):
                    mean = gram[:, 0, target_d] / gram[:, 0, 0]
                    variance = gram[:, target_d, target_d] / gram[:, 0, 0] - mean**2
                clear &= variance > 1e-6 * max(train._treatment_scale, 1e-300)

            shift = self._centring(centres)
            gram = shift @ gram @ np.transpose(shift, (0, 2, 1))
            moments = np.einsum("mij,mj->mi", shift, moments)
            diagonal = np.einsum("mii->mi", gram)
            clear &= np.all(diagonal > 0, axis=1)
            scale = np.sqrt(np.where(diagonal > 0, diagonal, 1.0))
            scaled = gram / (scale[:, :, None] * scale[:, None, :])
            eigenvalues = np.linalg.eigvalsh(scaled)
            positive = np.maximum((weights > 0).sum(axis=1), k)
            floor = np.maximum(
                constants.CV_CONDITION_FLOOR, (100 * constants.WLS_RANK_TOLERANCE * positive) ** 2
            )
            clear &= eigenvalues[:, 0] > floor * eigenvalues[:, -1]

            coefficients = np.empty((rows.shape[0], k))
            if clear.any():
                solved = np.linalg.solve(scaled[clear], (moments[clear] / scale[clear])[..., None])
                coefficients[clear] = solved[..., 0] / scale[clear]
            for i in np.flatnonzero(~clear):
                coefficients[i] = train.fit(centres[i], bandwidth, kernel).coefficients

            design = self.design(rows, centres)
            predictions[start : start + rows.shape[0]] = np.sum(design * coefficients, axis=1)
        return predictions

    def _fold_prediction_error(
        self,
        train: "LocalLinearProblem",
        test: np.ndarray,
        bandwidth: float,
        kernel: Kernel,
        per_point: bool,
    ) -> float:
        if per_point:
            total = 0.0
            for i in test:
                coefficients = train.fit(self.moderator[i], bandwidth, kernel).coefficients
                row = self.design(np.array([i]), self.moderator[i])[0]
                total += (self.response[i] - row @ coefficients) ** 2
            return total
        predicted = self.held_out_predictions(train, test, bandwidth, kernel)
        return float(np.sum((self.response[test] - predicted) ** 2))

    def cv_error(
        self, bandwidth: float, spec: KernelSpec, folds: np.ndarray, per_point: bool = False
    ) -> float:
        """
        K-fold mean squared prediction error: each held-out Y_i is predicted by
        the local model fitted at x0 = X_i on the other folds. A candidate with
        any degenerate held-out fit scores infinity. `per_point` fits every
        held-out point separately with `fit`; it is slower and gives the same
        score.
        """
        total = 0.0
        for fold in np.unique(folds):
            test = np.flatnonzero(folds == fold)
            train = self.take(np.flatnonzero(folds != fold))
            try:
                total += self._fold_prediction_error(
                    train, test, bandwidth, spec.kernel, per_point
                )
            except (InsufficientDataError, RankDeficiencyError):
                return float("inf")
        return total / self.n

    def select_bandwidth(self, spec: KernelSpec, seed: int, per_point: bool = False) -> float:
        """
        Returns the candidate bandwidth with the smallest cross-validated
        prediction error. Folds are deterministic given the seed.
        """
        candidates = spec.candidates(self.moderator)
        folds = fold_assignment(self.n, spec.cv_folds, seed)
        errors = np.array([self.cv_error(h, spec, folds, per_point) for h in candidates])
        for h, error in zip(candidates, errors):
            logger.debug("bandwidth %.4g: CV error %.6g", h, error)
        if not np.any(np.isfinite(errors)):
            raise BandwidthSelectionError(candidates.size)
        best = float(candidates[int(np.argmin(errors))])
        logger.info("selected bandwidth %.4g by %d-fold CV", best, spec.cv_folds)
        return best


def local_linear_fit(dataset: Dataset, x0: float, spec: KernelSpec) -> LocalFit:
    """The local-linear fit of Y on {1, D, X - x0, D (X - x0), Z} at x0, with
    weights K((X_i - x0) / h). The marginal effect is the D coefficient.

    Raises:
        ValidationError: The kernel spec has no numeric bandwidth.
        InsufficientDataError: The kernel effective sample size does not exceed
                               the 4 + p regressors.
        RankDeficiencyError: The local design is collinear.
    """
    if spec.bandwidth is None:
        raise ValidationError("local_linear_fit needs a numeric bandwidth; run select_bandwidth first")
    return LocalLinearProblem.for_dataset(dataset).fit(float(x0), spec.bandwidth, spec.kernel)


def select_bandwidth(dataset: Dataset, spec: KernelSpec = KernelSpec(), seed: int = 0) -> float:
    """
    Picks the bandwidth minimising the K-fold prediction error of the full local
    model over the kernel spec candidates.
    """
    return LocalLinearProblem.for_dataset(dataset).select_bandwidth(spec, seed)


def default_trim_threshold(n_regressors: int) -> float:
    return float(constants.TRIM_MULTIPLIER * n_regressors)


def smooth_curve(
    problem: LocalLinearProblem,
    grid: np.ndarray,
    spec: KernelSpec,
    n_boot: int,
    level: float,
    seed: int,
    trim_threshold: typing.Optional[float],
    n_jobs: typing.Optional[int],
    metadata: typing.Dict[str, typing.Any],
) -> CmeCurve:
    """Fits a local-linear problem on the grid and attaches bootstrap bands.

    The bandwidth is held fixed across replicates. Each replicate resamples the
    problem's rows and refits the points that were not trimmed.
    """
    bandwidth = spec.bandwidth
    if bandwidth is None:
        bandwidth = problem.select_bandwidth(spec, seed)
    threshold = (
        default_trim_threshold(problem.n_regressors) if trim_threshold is None else trim_threshold
    )
    curve = problem.fit_curve(grid, bandwidth, spec.kernel, min_effective_n=threshold)
    if curve.trimmed.all():
        logger.warning("every grid point was trimmed (threshold %.1f)", threshold)

    critical = None
    if n_boot > 0:

        def refit(indices: np.ndarray) -> np.ndarray:
            replicate = problem.take(indices).fit_curve(
                grid, bandwidth, spec.kernel, skip=curve.trimmed
            )
            return np.where(replicate.trimmed & ~curve.trimmed, np.nan, replicate.theta)

        draws = pairs_bootstrap(problem.n, n_boot, seed, refit, n_jobs)
        critical = sup_t_critical_value(curve.theta, curve.se, draws, ~curve.trimmed, level)

    metadata = dict(metadata)
    metadata.update(
        {
            "bandwidth": bandwidth,
            "kernel": spec.kernel.value,
            "seed": seed,
            "n": problem.n,
            "n_boot": n_boot,
            "trim_threshold": threshold,
            "effective_n": curve.effective_n.tolist(),
        }
    )
    return build_curve(grid, curve.theta, curve.se, curve.trimmed, level, critical, metadata)


def estimate_kernel(
    dataset: Dataset,
    grid: typing.Optional[typing.Any] = None,
    spec: KernelSpec = KernelSpec(),
    n_boot: int = constants.DEFAULT_N_BOOT,
    level: float = constants.DEFAULT_CONFIDENCE_LEVEL,
    seed: int = constants.DEFAULT_SEED,
    trim_threshold: typing.Optional[float] = None,
    n_jobs: typing.Optional[int] = None,
) -> CmeCurve:
    """The kernel estimator of the conditional marginal effect.

    Runs `local_linear_fit` at every grid point, trims points whose effective
    sample size is below `trim_threshold` (default 4 (4 + p)), and builds
    pointwise intervals estimate +/- z se. With `n_boot > 0` a pairs bootstrap
    at the same bandwidth supplies the sup-t uniform band.

    Raises:
        BootstrapFailureError: Fewer than 50 bootstrap fits succeeded.
    """
    grid = make_grid(dataset) if grid is None else validate_grid(dataset, grid)
    problem = LocalLinearProblem.for_dataset(dataset)
    return smooth_curve(
        problem,
        grid,
        spec,
        n_boot,
        level,
        seed,
        trim_threshold,
        n_jobs,
        {"estimator": Estimator.KERNEL.value},
    )
