"""
Numerical kernels shared by every estimator: weighted least squares with HC1
covariance, ridge-penalised logistic regression, LASSO by coordinate descent
and seedable random streams.

All functions are pure; random draws only come from generators built by
`rng_stream`, so results do not depend on thread scheduling.
"""
import logging
import typing
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy import stats
from scipy.special import expit

from . import constants
from .exceptions import (
    InsufficientDataError,
    PerfectSeparationError,
    RankDeficiencyError,
    ValidationError,
)
from .types import Stream
from .utils import as_float_array

logger = logging.getLogger(__name__)


def rng_stream(
    seed: int, stream_id: int, domain: Stream = Stream.SAMPLE
) -> np.random.Generator:
    """Returns a counter-based generator for the (seed, stream) pair.

    Identical pairs give identical sequences; different stream ids (or
    domains) give independent ones.

    Args:
        seed (int): An unsigned 64-bit seed.
        stream_id (int): An unsigned 64-bit stream index.
        domain (Stream, optional): Separates consumers that share a seed.
    """
    if not 0 <= int(seed) < 2**64 or not 0 <= int(stream_id) < 2**64:
        raise ValidationError("seed and stream id must be unsigned 64-bit integers")
    sequence = np.random.SeedSequence(int(seed), spawn_key=(domain.value, int(stream_id)))
    return np.random.Generator(np.random.Philox(sequence))


def derive_seed(seed: int, index: int, domain: Stream = Stream.REPLICATION) -> int:
    """
    Returns a child seed for task `index`. Used to hand every Monte Carlo
    replication its own seed.
    """
    return int(rng_stream(seed, index, domain).integers(0, 2**63))


def fold_assignment(n: int, n_folds: int, seed: int) -> np.ndarray:
    """
    Assigns n observations to `n_folds` folds of (nearly) equal size. Returns
    fold labels 0..n_folds-1, deterministic given the seed.
    """
    if n < n_folds:
        raise ValidationError(f"cannot split {n} observations into {n_folds} folds")
    permutation = rng_stream(seed, 0, Stream.FOLDS).permutation(n)
    folds = np.empty(n, dtype=int)
    folds[permutation] = np.arange(n) % n_folds
    return folds


@dataclass(frozen=True)
class WlsFit:
    """A weighted least-squares fit.

    Props:
        coefficients (np.ndarray): The minimiser of sum w_i (y_i - x_i'b)^2.
        covariance (np.ndarray): HC1 sandwich covariance.
        residuals (np.ndarray): y - Xb for every row, weighted or not.
        effective_n (float): Sum of the weights.
        labels (tuple): Column labels, used in error messages and lookups.
    """

    coefficients: np.ndarray
    covariance: np.ndarray
    residuals: np.ndarray
    effective_n: float
    labels: typing.Tuple[str, ...] = ()

    @property
    def std_errors(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))

    def index(self, label: str) -> int:
        return self.labels.index(label)

    def coefficient(self, label: str) -> float:
        return float(self.coefficients[self.index(label)])


def wls(
    design: typing.Any,
    response: typing.Any,
    weights: typing.Optional[typing.Any] = None,
    labels: typing.Optional[typing.Sequence[str]] = None,
) -> WlsFit:
    """Weighted least squares with a heteroskedasticity-robust (HC1) covariance.

    Only rows with positive weight enter the fit. The HC1 small-sample factor
    m / (m - k) uses the number m of such rows; with m = k the fit
    interpolates and the factor is dropped.

    Args:
        design (array): n x k design matrix.
        response (array): n responses.
        weights (array, optional): n non-negative weights. Defaults to ones.
        labels (typing.Sequence[str], optional): Column labels.

    Raises:
        ValidationError: Shapes disagree or weights are negative.
        InsufficientDataError: Fewer positive-weight rows than columns.
        RankDeficiencyError: The weighted design is rank deficient. The message
                             names the collinear columns.
    """
    X = as_float_array(design, ndim=2)
    y = as_float_array(response).ravel()
    n, k = X.shape
    w = np.ones(n) if weights is None else as_float_array(weights).ravel()
    if y.shape[0] != n or w.shape[0] != n:
        raise ValidationError(
            f"shape mismatch: design has {n} rows, response {y.shape[0]}, weights {w.shape[0]}"
        )
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValidationError("weights must be finite and non-negative")
    labels = tuple(labels) if labels is not None else tuple(f"x{j}" for j in range(k))

    positive = w > 0
    m = int(positive.sum())
    if m < k:
        raise InsufficientDataError(float(w.sum()), k, "for weighted least squares")

    Xp, yp, wp = X[positive], y[positive], w[positive]
    root = np.sqrt(wp)
    Xw = Xp * root[:, None]
    yw = yp * root

    scale = np.linalg.norm(Xw, axis=0)
    if np.any(scale == 0):
        raise RankDeficiencyError([labels[j] for j in np.flatnonzero(scale == 0)])
    q, r, pivot = scipy.linalg.qr(Xw / scale, mode="economic", pivoting=True)
    diagonal = np.abs(np.diag(r))
    rank = int(np.sum(diagonal > constants.WLS_RANK_TOLERANCE * max(m, k) * diagonal[0]))
    if rank < k:
        raise RankDeficiencyError([labels[j] for j in sorted(pivot[rank:])])

    beta = np.empty(k)
    beta[pivot] = scipy.linalg.solve_triangular(r, q.T @ yw)
    beta /= scale

    r_inv = scipy.linalg.solve_triangular(r, np.eye(k))
    bread = np.empty((k, k))
    bread[np.ix_(pivot, pivot)] = r_inv @ r_inv.T
    bread /= np.outer(scale, scale)

    scores = Xp * (wp * (yp - Xp @ beta))[:, None]
    factor = m / (m - k) if m > k else 1.0
    covariance = factor * bread @ (scores.T @ scores) @ bread
    covariance = (covariance + covariance.T) / 2

    return WlsFit(
        coefficients=beta,
        covariance=covariance,
        residuals=y - X @ beta,
        effective_n=float(w.sum()),
        labels=labels,
    )


def _logistic_loglik(design, labels, beta, penalty) -> float:
    eta = design @ beta
    return float(np.sum(labels * eta - np.logaddexp(0.0, eta)) - 0.5 * np.sum(penalty * beta**2))


def logistic_irls(
    design: typing.Any,
    labels: typing.Any,
    l2_ridge: float = 0.0,
    max_iter: int = constants.IRLS_MAX_ITER,
    tol: float = constants.IRLS_TOLERANCE,
    history: typing.Optional[typing.List[float]] = None,
) -> np.ndarray:
    """Ridge-penalised logistic regression by iteratively reweighted least
    squares.

    An intercept is prepended and left unpenalised, so the result has one more
    entry than `design` has columns: (intercept, slopes...). Steps are halved
    whenever they would lower the penalised log-likelihood.

    Args:
        design (array): n x k design without an intercept column.
        labels (array): 0/1 labels with both classes present.
        l2_ridge (float, optional): Ridge penalty on the slopes.
        history (list, optional): Receives the penalised log-likelihood after
                                  every iteration.

    Raises:
        ValidationError: Labels are not 0/1 or hold a single class.
        PerfectSeparationError: The unpenalised fit diverges.
    """
    X = as_float_array(design, ndim=2)
    y = as_float_array(labels).ravel()
    if X.shape[0] != y.shape[0]:
        raise ValidationError("design and labels have different lengths")
    if not np.all((y == 0) | (y == 1)):
        raise ValidationError("labels must be 0 or 1")
    if y.min() == y.max():
        raise ValidationError("labels hold a single class; both 0 and 1 are required")
    if l2_ridge < 0:
        raise ValidationError("l2_ridge must be non-negative")

    A = np.column_stack([np.ones(X.shape[0]), X])
    penalty = np.full(A.shape[1], float(l2_ridge))
    penalty[0] = 0.0
    beta = np.zeros(A.shape[1])
    loglik = _logistic_loglik(A, y, beta, penalty)

    for iteration in range(1, max_iter + 1):
        p = expit(A @ beta)
        gradient = A.T @ (y - p) - penalty * beta
        hessian = A.T @ (A * (p * (1 - p))[:, None]) + np.diag(penalty)
        try:
            step = scipy.linalg.solve(hessian, gradient, assume_a="pos")
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
            raise PerfectSeparationError(iteration)

        t = 1.0
        while True:
            candidate = beta + t * step
            candidate_loglik = _logistic_loglik(A, y, candidate, penalty)
            if candidate_loglik >= loglik or t < 1e-10:
                break
            t /= 2

        change = float(np.max(np.abs(candidate - beta)))
        beta, loglik = candidate, max(candidate_loglik, loglik)
        if history is not None:
            history.append(loglik)

        eta = A @ beta
        if l2_ridge == 0 and np.max(np.abs(eta)) > 30 and np.all((eta > 0) == (y == 1)):
            raise PerfectSeparationError(iteration)
        if change < tol:
            logger.debug("IRLS converged after %d iterations", iteration)
            break
    else:
        logger.debug("IRLS stopped at the %d-iteration cap", max_iter)

    return beta


def logistic_predict(design: typing.Any, coefficients: np.ndarray) -> np.ndarray:
    """
    Probabilities from `logistic_irls` coefficients (intercept first).
    """
    X = as_float_array(design, ndim=2)
    return expit(coefficients[0] + X @ coefficients[1:])


@dataclass(frozen=True)
class LassoFit:
    """A LASSO fit on the original scale of the design.

    Props:
        coefficients (np.ndarray): Slopes on the original scale.
        intercept (float): Unpenalised intercept.
        lambda_ (float): Penalty of the standardised problem
                         (1/2n)||y - Xb||^2 + lambda ||b||_1.
        active_set (tuple): Indices of the non-zero slopes.
        objective_trace (tuple): Standardised objective after each sweep.
        kkt_violation (float): Largest KKT residual at the solution.
        standardized (np.ndarray): Slopes on the standardised scale, for warm
                                   starts.
    """

    coefficients: np.ndarray
    intercept: float
    lambda_: float
    active_set: typing.Tuple[int, ...]
    objective_trace: typing.Tuple[float, ...]
    kkt_violation: float
    standardized: np.ndarray

    def predict(self, design: typing.Any) -> np.ndarray:
        return self.intercept + as_float_array(design, ndim=2) @ self.coefficients


class _Standardized:
    """
    Centred and unit-variance copy of a design, with its Gram matrix.
    """

    def __init__(self, X: np.ndarray, y: np.ndarray):
        self.n = X.shape[0]
        self.mean_x = X.mean(axis=0)
        self.sd = X.std(axis=0)
        self.keep = self.sd > 0
        safe_sd = np.where(self.keep, self.sd, 1.0)
        Xs = np.where(self.keep, (X - self.mean_x) / safe_sd, 0.0)
        self.mean_y = float(y.mean())
        yc = y - self.mean_y
        self.gram = Xs.T @ Xs / self.n
        self.corr = Xs.T @ yc / self.n
        self.yy = float(yc @ yc / self.n)

    def lambda_max(self) -> float:
        return float(np.max(np.abs(self.corr))) if self.corr.size else 0.0

    def objective(self, b: np.ndarray, lam: float) -> float:
        return 0.5 * (self.yy - 2 * self.corr @ b + b @ self.gram @ b) + lam * np.abs(b).sum()


def _soft_threshold(value: float, lam: float) -> float:
    if value > lam:
        return value - lam
    if value < -lam:
        return value + lam
    return 0.0


def _lasso_standardized(
    problem: _Standardized,
    lam: float,
    start: typing.Optional[np.ndarray],
    tol: float,
    max_sweeps: int,
) -> LassoFit:
    p = problem.gram.shape[0]
    b = np.zeros(p) if start is None else start.copy()
    gram, corr = problem.gram, problem.corr
    trace = []
    columns = np.flatnonzero(problem.keep)

    for sweep in range(max_sweeps):
        max_change = 0.0
        for j in columns:
            rho = corr[j] - gram[j] @ b + gram[j, j] * b[j]
            new = _soft_threshold(rho, lam) / gram[j, j]
            if new != b[j]:
                max_change = max(max_change, abs(new - b[j]))
                b[j] = new
        trace.append(problem.objective(b, lam))
        if max_change < tol:
            break
    else:
        logger.warning("coordinate descent hit the %d-sweep cap at lambda %.4g", max_sweeps, lam)

    gradient = corr - gram @ b
    active = b != 0
    violation = 0.0
    if columns.size:
        inactive_excess = np.clip(np.abs(gradient[~active & problem.keep]) - lam, 0.0, None)
        active_residual = np.abs(gradient[active] - lam * np.sign(b[active]))
        violation = float(max(inactive_excess.max(initial=0.0), active_residual.max(initial=0.0)))

    safe_sd = np.where(problem.keep, problem.sd, 1.0)
    coefficients = np.where(problem.keep, b / safe_sd, 0.0)
    return LassoFit(
        coefficients=coefficients,
        intercept=problem.mean_y - float(problem.mean_x @ coefficients),
        lambda_=float(lam),
        active_set=tuple(int(j) for j in np.flatnonzero(active)),
        objective_trace=tuple(trace),
        kkt_violation=violation,
        standardized=b,
    )


def lasso_cd(
    design: typing.Any,
    response: typing.Any,
    lam: float,
    tol: float = constants.LASSO_TOLERANCE,
    max_sweeps: int = constants.LASSO_MAX_SWEEPS,
    warm_start: typing.Optional[np.ndarray] = None,
) -> LassoFit:
    """LASSO by cyclic coordinate descent with covariance updates.

    Columns are standardised to unit variance internally and the intercept is
    left unpenalised. Sweeps stop once no coordinate moves by more than `tol`,
    which keeps the KKT residual well under 1e-6 on standardised designs.
    Constant columns get a zero coefficient.

    Args:
        design (array): n x p design without an intercept column.
        response (array): n responses.
        lam (float): Non-negative penalty. Any lam >= max_j |x_j'y| / n on the
                     standardised scale zeroes every slope.
        warm_start (np.ndarray, optional): Standardised starting slopes.
    """
    X = as_float_array(design, ndim=2)
    y = as_float_array(response).ravel()
    if X.shape[0] != y.shape[0]:
        raise ValidationError("design and response have different lengths")
    if lam < 0:
        raise ValidationError("lambda must be non-negative")
    return _lasso_standardized(_Standardized(X, y), float(lam), warm_start, tol, max_sweeps)


def lambda_max(design: typing.Any, response: typing.Any) -> float:
    """
    The smallest penalty that zeroes every slope.
    """
    X = as_float_array(design, ndim=2)
    return _Standardized(X, as_float_array(response).ravel()).lambda_max()


def lasso_path(
    design: typing.Any,
    response: typing.Any,
    lambdas: typing.Optional[typing.Sequence[float]] = None,
    n_lambdas: int = constants.LASSO_PATH_SIZE,
    tol: float = constants.LASSO_TOLERANCE,
) -> typing.List[LassoFit]:
    """
    Fits a decreasing sequence of penalties with warm starts. Without explicit
    `lambdas`, uses `n_lambdas` log-spaced values from lambda_max down to
    1e-3 * lambda_max.
    """
    X = as_float_array(design, ndim=2)
    y = as_float_array(response).ravel()
    problem = _Standardized(X, y)
    if lambdas is None:
        top = problem.lambda_max()
        lambdas = _default_lambdas(top, n_lambdas)
    fits = []
    start = None
    for lam in sorted(lambdas, reverse=True):
        fit = _lasso_standardized(problem, float(lam), start, tol, constants.LASSO_MAX_SWEEPS)
        start = fit.standardized
        fits.append(fit)
    return fits


def _default_lambdas(top: float, n_lambdas: int) -> np.ndarray:
    if top <= 0:
        return np.zeros(1)
    return np.geomspace(top, top * constants.LASSO_PATH_RATIO, n_lambdas)


def cv_lambda_curve(
    design: typing.Any,
    response: typing.Any,
    n_folds: int = constants.DEFAULT_CV_FOLDS,
    seed: int = 0,
    n_lambdas: int = constants.LASSO_PATH_SIZE,
) -> typing.Tuple[np.ndarray, np.ndarray]:
    """Out-of-fold mean squared error along the default penalty path.

    Returns:
        typing.Tuple[np.ndarray, np.ndarray]: Penalties (decreasing) and the
                                              matching mean squared errors.
    """
    X = as_float_array(design, ndim=2)
    y = as_float_array(response).ravel()
    n = X.shape[0]
    if n_folds < 2:
        raise ValidationError("n_folds must be at least 2")
    folds = fold_assignment(n, n_folds, seed)
    lambdas = _default_lambdas(lambda_max(X, y), n_lambdas)

    errors = np.zeros(lambdas.shape[0])
    for fold in range(n_folds):
        train, test = folds != fold, folds == fold
        path = lasso_path(X[train], y[train], lambdas=lambdas)
        for i, fit in enumerate(path):
            errors[i] += np.sum((y[test] - fit.predict(X[test])) ** 2)
    errors /= n
    return lambdas, errors


def cv_lambda(
    design: typing.Any,
    response: typing.Any,
    n_folds: int = constants.DEFAULT_CV_FOLDS,
    seed: int = 0,
    n_lambdas: int = constants.LASSO_PATH_SIZE,
) -> float:
    """
    The penalty minimising K-fold mean squared error over a 50-point log path.
    Ties go to the larger penalty. Folds are deterministic given the seed.
    """
    lambdas, errors = cv_lambda_curve(design, response, n_folds, seed, n_lambdas)
    best = int(np.argmin(errors))
    logger.debug("cv_lambda picked %.4g (index %d of %d)", lambdas[best], best, lambdas.size)
    return float(lambdas[best])


def plugin_lambda(
    design: typing.Any,
    response: typing.Any,
    c: float = constants.PLUGIN_LAMBDA_C,
    gamma: float = constants.PLUGIN_LAMBDA_GAMMA,
    max_iter: int = 5,
) -> float:
    """
    The rigorous plug-in penalty c * sigma * Phi^-1(1 - gamma / 2p) / sqrt(n)
    for the standardised problem, with sigma re-estimated from the residuals
    of the LASSO fit a few times.
    """
    X = as_float_array(design, ndim=2)
    y = as_float_array(response).ravel()
    n, p = X.shape
    quantile = stats.norm.ppf(1 - gamma / (2 * max(p, 1)))
    sigma = float(np.std(y))
    lam = c * sigma * quantile / np.sqrt(n)
    for _ in range(max_iter):
        fit = lasso_cd(X, y, lam)
        sigma_new = float(np.std(y - fit.predict(X)))
        lam_new = c * sigma_new * quantile / np.sqrt(n)
        if abs(lam_new - lam) <= 1e-6 * max(lam, 1e-12):
            break
        lam = lam_new
    return float(lam)
