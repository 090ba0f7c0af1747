"""
Debiased estimators of the conditional marginal effect: doubly robust AIPW
pseudo-outcomes, post-double-selection on the fully interacted model and
cross-fitted residual-on-residual local regression.

Nuisance functions of V = (X, Z) are always cross-fitted: the model that
predicts observation i was trained on the folds that exclude it.
"""
import dataclasses
import itertools
import logging
import typing
import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.ensemble import GradientBoostingClassifier, GradientBoostingRegressor

from . import constants
from .bootstrap import build_curve, pairs_bootstrap, sup_t_critical_value
from .data import CmeCurve, Dataset, make_grid, validate_grid
from .exceptions import (
    DegenerateFoldError,
    OverlapFailureError,
    ValidationError,
)
from .kernel import KernelSpec, LocalLinearProblem, estimate_kernel, smooth_curve
from .numerics import (
    WlsFit,
    cv_lambda,
    derive_seed,
    fold_assignment,
    lasso_cd,
    logistic_irls,
    logistic_predict,
    plugin_lambda,
    wls,
)
from .parallel import run_tasks
from .types import Estimator, Learner, Stream
from .utils import as_float_array, frozen, parse_enum

logger = logging.getLogger(__name__)

Monomial = typing.Tuple[int, ...]


def _monomial_label(names: typing.Sequence[str], exponents: Monomial) -> str:
    parts = []
    for name, power in zip(names, exponents):
        if power == 1:
            parts.append(name)
        elif power > 1:
            parts.append(f"{name}^{power}")
    return "*".join(parts) or "1"


def _evaluate_monomials(values: np.ndarray, monomials: typing.Sequence[Monomial]) -> np.ndarray:
    columns = [np.prod(values ** np.asarray(e, dtype=float), axis=1) for e in monomials]
    return np.column_stack(columns) if columns else np.empty((values.shape[0], 0))


@dataclass(frozen=True)
class BasisExpansion:
    """Powers 1..degree of every source column plus all pairwise products.

    Terms come in a fixed order (powers column by column, then products in
    lexicographic pair order), so labels are stable for a given schema.
    """

    names: typing.Tuple[str, ...]
    degree: int = constants.BASIS_DEGREE

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        if self.degree < 1:
            raise ValidationError("basis degree must be at least 1")

    @classmethod
    def for_dataset(cls, dataset: Dataset, include_moderator: bool = True) -> "BasisExpansion":
        names = dataset.covariate_names
        if include_moderator:
            names = (dataset.column_names[2], *names)
        return cls(names)

    @property
    def monomials(self) -> typing.List[Monomial]:
        k = len(self.names)
        terms = []
        for j in range(k):
            for power in range(1, self.degree + 1):
                terms.append(tuple(power if i == j else 0 for i in range(k)))
        for a, b in itertools.combinations(range(k), 2):
            terms.append(tuple(1 if i in (a, b) else 0 for i in range(k)))
        return terms

    @property
    def labels(self) -> typing.List[str]:
        return [_monomial_label(self.names, e) for e in self.monomials]

    def transform(self, values: typing.Any) -> np.ndarray:
        values = as_float_array(values, ndim=2)
        if values.shape[1] != len(self.names):
            raise ValidationError(
                f"basis expects {len(self.names)} columns, got {values.shape[1]}"
            )
        return _evaluate_monomials(values, self.monomials)


def _nuisance_inputs(dataset: Dataset) -> np.ndarray:
    return np.column_stack([dataset.moderator, dataset.covariates])


def clip_propensity(
    propensity: np.ndarray, bounds: typing.Tuple[float, float] = constants.PROPENSITY_BOUNDS
) -> typing.Tuple[np.ndarray, int]:
    """
    Clips propensities into `bounds` and returns them with the number of
    values that had to move.
    """
    low, high = bounds
    if not 0 < low < high < 1:
        raise ValidationError("propensity bounds must satisfy 0 < low < high < 1")
    propensity = as_float_array(propensity).ravel()
    clipped = int(np.sum((propensity < low) | (propensity > high)))
    return np.clip(propensity, low, high), clipped


@dataclass(frozen=True)
class NuisanceFits:
    """Cross-fitted nuisance predictions, one entry per observation.

    Props:
        outcome_marginal (np.ndarray):   E[Y | V].
        treatment_marginal (np.ndarray): E[D | V]. For binary treatments this
                                         is the clipped propensity.
        fold_id (np.ndarray):            Fold labels 0..K-1.
        propensity (np.ndarray):         e(V) clipped into `bounds`. Binary
                                         treatments only.
        outcome_treated (np.ndarray):    E[Y | V, D = 1]. Binary only.
        outcome_control (np.ndarray):    E[Y | V, D = 0]. Binary only.
        clipped (int):                   Propensities moved by clipping.
        bounds (tuple):                  The clipping bounds.
        learner (str):                   Which learner produced the fits.
    """

    outcome_marginal: np.ndarray
    treatment_marginal: np.ndarray
    fold_id: np.ndarray
    propensity: typing.Optional[np.ndarray] = None
    outcome_treated: typing.Optional[np.ndarray] = None
    outcome_control: typing.Optional[np.ndarray] = None
    clipped: int = 0
    bounds: typing.Tuple[float, float] = constants.PROPENSITY_BOUNDS
    learner: str = "external"

    @classmethod
    def from_predictions(
        cls,
        outcome_marginal: typing.Any,
        treatment_marginal: typing.Optional[typing.Any] = None,
        propensity: typing.Optional[typing.Any] = None,
        outcome_treated: typing.Optional[typing.Any] = None,
        outcome_control: typing.Optional[typing.Any] = None,
        fold_id: typing.Optional[typing.Any] = None,
        bounds: typing.Tuple[float, float] = constants.PROPENSITY_BOUNDS,
        learner: str = "external",
    ) -> "NuisanceFits":
        """Wraps known or externally fitted nuisance values, e.g. the true
        propensity of a simulation. Propensities are clipped and counted; a
        missing treatment_marginal defaults to the clipped propensity.
        """
        outcome_marginal = as_float_array(outcome_marginal).ravel()
        n = outcome_marginal.shape[0]
        clipped = 0
        if propensity is not None:
            propensity, clipped = clip_propensity(propensity, bounds)
            propensity = frozen(propensity)
        if treatment_marginal is None:
            if propensity is None:
                raise ValidationError("treatment_marginal or propensity is required")
            treatment_marginal = propensity
        vectors = {
            "treatment_marginal": treatment_marginal,
            "outcome_treated": outcome_treated,
            "outcome_control": outcome_control,
        }
        converted = {}
        for name, values in vectors.items():
            if values is None:
                converted[name] = None
                continue
            values = as_float_array(values).ravel()
            if values.shape[0] != n:
                raise ValidationError(f"{name} has {values.shape[0]} entries, expected {n}")
            converted[name] = frozen(values)
        fold_id = np.zeros(n, dtype=int) if fold_id is None else np.asarray(fold_id, dtype=int)
        return cls(
            outcome_marginal=frozen(outcome_marginal),
            treatment_marginal=converted["treatment_marginal"],
            fold_id=frozen(fold_id.copy()),
            propensity=propensity,
            outcome_treated=converted["outcome_treated"],
            outcome_control=converted["outcome_control"],
            clipped=clipped,
            bounds=bounds,
            learner=learner,
        )

    @property
    def n(self) -> int:
        return self.outcome_marginal.shape[0]

    @property
    def clip_rate(self) -> float:
        return self.clipped / self.n if self.n else 0.0

    @property
    def has_binary_components(self) -> bool:
        return self.propensity is not None and self.outcome_treated is not None


@dataclass(frozen=True)
class LearnerParams:
    """Hyperparameters of the nuisance learners.

    Args:
        ridge (float): Ridge penalty of the basis logistic propensity model,
                       on standardised basis columns.
        trees_rounds (int): Maximum boosting rounds.
        trees_depth (int): Tree depth.
        trees_learning_rate (float): Shrinkage.
        cv_folds (int): Folds of the inner LASSO penalty search.
    """

    ridge: float = constants.DEFAULT_RIDGE
    trees_rounds: int = constants.TREES_ROUNDS
    trees_depth: int = constants.TREES_DEPTH
    trees_learning_rate: float = constants.TREES_LEARNING_RATE
    cv_folds: int = constants.DEFAULT_CV_FOLDS


class _BasisLearner:
    """LASSO regressions and ridge-logistic classification on the basis."""

    def __init__(self, basis: BasisExpansion, params: LearnerParams, seed: int):
        self.basis = basis
        self.params = params
        self.seed = seed

    def regress(self, v_train, y_train, v_test) -> np.ndarray:
        features = self.basis.transform(v_train)
        lam = cv_lambda(features, y_train, n_folds=self.params.cv_folds, seed=self.seed)
        fit = lasso_cd(features, y_train, lam)
        return fit.predict(self.basis.transform(v_test))

    def classify(self, v_train, d_train, v_test) -> np.ndarray:
        features = self.basis.transform(v_train)
        mean, sd = features.mean(axis=0), features.std(axis=0)
        sd = np.where(sd > 0, sd, 1.0)
        coefficients = logistic_irls((features - mean) / sd, d_train, l2_ridge=self.params.ridge)
        return logistic_predict((self.basis.transform(v_test) - mean) / sd, coefficients)


class _TreesLearner:
    """Depth-limited gradient boosting with early stopping on a validation
    split of the training folds."""

    def __init__(self, params: LearnerParams, seed: int):
        self.params = params
        self.random_state = seed % 2**32

    def _options(self) -> dict:
        return dict(
            n_estimators=self.params.trees_rounds,
            max_depth=self.params.trees_depth,
            learning_rate=self.params.trees_learning_rate,
            validation_fraction=constants.TREES_VALIDATION_FRACTION,
            n_iter_no_change=constants.TREES_PATIENCE,
            random_state=self.random_state,
        )

    def regress(self, v_train, y_train, v_test) -> np.ndarray:
        model = GradientBoostingRegressor(**self._options())
        return model.fit(v_train, y_train).predict(v_test)

    def classify(self, v_train, d_train, v_test) -> np.ndarray:
        model = GradientBoostingClassifier(**self._options())
        return model.fit(v_train, d_train.astype(int)).predict_proba(v_test)[:, 1]


def fit_nuisances(
    dataset: Dataset,
    learner: typing.Union[Learner, str] = Learner.LASSO_BASIS,
    k_folds: int = constants.DEFAULT_K_FOLDS,
    seed: int = constants.DEFAULT_SEED,
    params: LearnerParams = LearnerParams(),
    folds: typing.Optional[np.ndarray] = None,
    bounds: typing.Tuple[float, float] = constants.PROPENSITY_BOUNDS,
    n_jobs: typing.Optional[int] = None,
) -> NuisanceFits:
    """Cross-fits the nuisance functions of V = (X, Z).

    E[Y | V] and E[D | V] are always fitted. For a treatment declared binary the
    propensity and the arm-specific outcome regressions are fitted as well and
    E[D | V] is the clipped propensity. Model seeds do not depend on the fold
    label, so relabelling the folds leaves every prediction unchanged.

    Args:
        dataset (Dataset): The data.
        learner (Learner, optional): lasso_basis or boosted_trees.
        k_folds (int, optional): Number of folds, at least 2.
        seed (int, optional): Seeds the fold assignment and the learners.
        params (LearnerParams, optional): Learner hyperparameters.
        folds (np.ndarray, optional): Explicit fold labels, overriding the
                                      seeded assignment.

    Raises:
        OverlapFailureError: A binary treatment takes a single value.
        DegenerateFoldError: A training fold holds a single treatment class.
    """
    learner = parse_enum(Learner, learner, "learner")
    if folds is None:
        if k_folds < 2:
            raise ValidationError("k_folds must be at least 2")
        folds = fold_assignment(dataset.n, k_folds, seed)
    else:
        folds = np.asarray(folds, dtype=int)
        if folds.shape[0] != dataset.n or np.unique(folds).size < 2:
            raise ValidationError("folds must label every observation with at least two folds")
    labels = np.unique(folds)

    d, y = dataset.treatment, dataset.outcome
    binary = dataset.treatment_binary
    if binary and d.min() == d.max():
        raise OverlapFailureError(
            "every unit is treated" if d[0] == 1 else "no unit is treated"
        )

    model_seed = derive_seed(seed, 0, Stream.MODEL)
    if learner is Learner.LASSO_BASIS:
        model = _BasisLearner(BasisExpansion.for_dataset(dataset), params, model_seed)
    else:
        model = _TreesLearner(params, model_seed)
    v = _nuisance_inputs(dataset)

    def fit_fold(index: int) -> typing.Dict[str, np.ndarray]:
        fold = labels[index]
        test = folds == fold
        train = ~test
        predictions = {"outcome_marginal": model.regress(v[train], y[train], v[test])}
        if binary:
            d_train = d[train]
            if d_train.min() == d_train.max():
                raise DegenerateFoldError(int(fold))
            treated, control = train & (d == 1), train & (d == 0)
            predictions["propensity"] = model.classify(v[train], d_train, v[test])
            predictions["outcome_treated"] = model.regress(v[treated], y[treated], v[test])
            predictions["outcome_control"] = model.regress(v[control], y[control], v[test])
        else:
            predictions["treatment_marginal"] = model.regress(v[train], d[train], v[test])
        logger.debug("fitted nuisances on fold %d (%d held out)", fold, int(test.sum()))
        return predictions

    results = run_tasks(fit_fold, labels.size, n_jobs)
    combined: typing.Dict[str, np.ndarray] = {}
    for index, predictions in enumerate(results):
        test = folds == labels[index]
        for name, values in predictions.items():
            combined.setdefault(name, np.empty(dataset.n))[test] = values

    nuisances = NuisanceFits.from_predictions(
        outcome_marginal=combined["outcome_marginal"],
        treatment_marginal=combined.get("treatment_marginal"),
        propensity=combined.get("propensity"),
        outcome_treated=combined.get("outcome_treated"),
        outcome_control=combined.get("outcome_control"),
        fold_id=folds,
        bounds=bounds,
        learner=learner.value,
    )
    logger.info(
        "cross-fitted %s nuisances over %d folds (%d propensities clipped)",
        learner.value,
        labels.size,
        nuisances.clipped,
    )
    return nuisances


def binary_treatment(func: typing.Callable):
    """When an estimator has this decorator it cannot run unless the dataset's
    treatment is declared binary and the nuisance fits hold the propensity and
    arm-specific outcome regressions.

    Args:
        func (typing.Callable): The estimator to wrap. Its first two arguments
                                must be the dataset and the nuisance fits.
    """

    def wrapper(dataset: Dataset, nuisances: NuisanceFits, *args, **kwargs):
        if not dataset.treatment_binary:
            raise ValidationError(
                f"{func.__name__} requires a treatment declared binary (treatment_binary)"
            )
        if not nuisances.has_binary_components:
            raise ValidationError(
                f"{func.__name__} needs the propensity and arm-specific outcome fits"
            )
        if nuisances.n != dataset.n:
            raise ValidationError("nuisance fits and dataset have different lengths")
        return func(dataset, nuisances, *args, **kwargs)

    wrapper.__name__ = func.__name__
    wrapper.__doc__ = func.__doc__
    return wrapper


def aipw_pseudo_outcome(dataset: Dataset, nuisances: NuisanceFits) -> np.ndarray:
    """
    The doubly robust score m1 - m0 + D (Y - m1) / e - (1 - D)(Y - m0) / (1 - e).
    """
    d, y, e = dataset.treatment, dataset.outcome, nuisances.propensity
    m1, m0 = nuisances.outcome_treated, nuisances.outcome_control
    return m1 - m0 + d * (y - m1) / e - (1 - d) * (y - m0) / (1 - e)


def _resolve_grid(dataset: Dataset, grid: typing.Optional[typing.Any]) -> np.ndarray:
    return make_grid(dataset) if grid is None else validate_grid(dataset, grid)


@binary_treatment
def estimate_aipw(
    dataset: Dataset,
    nuisances: NuisanceFits,
    grid: typing.Optional[typing.Any] = None,
    spec: KernelSpec = KernelSpec(),
    n_boot: int = constants.DEFAULT_N_BOOT,
    level: float = constants.DEFAULT_CONFIDENCE_LEVEL,
    seed: int = constants.DEFAULT_SEED,
    trim_threshold: typing.Optional[float] = None,
    n_jobs: typing.Optional[int] = None,
) -> CmeCurve:
    """Smooths the AIPW pseudo-outcome over the moderator.

    The local model at x0 is a level plus a linear trend in X - x0; the level
    is the effect. Bootstrap replicates resample (X, pseudo-outcome) pairs, so
    the nuisance fits stay frozen.

    Raises:
        OverlapFailureError: Every unit sits in one arm, or more than half of
                             the propensities were clipped.
    """
    d = dataset.treatment
    if d.min() == d.max():
        raise OverlapFailureError("every unit is treated" if d[0] == 1 else "no unit is treated")
    run_warnings = []
    if nuisances.clip_rate > constants.CLIP_FAILURE_RATE:
        raise OverlapFailureError(
            f"{nuisances.clip_rate:.0%} of propensities fell outside {nuisances.bounds}"
        )
    if nuisances.clip_rate > constants.CLIP_WARNING_RATE:
        message = (
            f"{nuisances.clip_rate:.1%} of propensities were clipped into {nuisances.bounds}; "
            "overlap is weak"
        )
        logger.warning(message)
        warnings.warn(message)
        run_warnings.append(message)

    grid = _resolve_grid(dataset, grid)
    problem = LocalLinearProblem(dataset.moderator, aipw_pseudo_outcome(dataset, nuisances))
    return smooth_curve(
        problem,
        grid,
        spec,
        n_boot,
        level,
        seed,
        trim_threshold,
        n_jobs,
        {
            "estimator": Estimator.AIPW_LASSO.value,
            "learner": nuisances.learner,
            "clip_rate": nuisances.clip_rate,
            "nuisance_bootstrap": "frozen",
            "warnings": run_warnings,
        },
    )


def estimate_dml_plm(
    dataset: Dataset,
    nuisances: NuisanceFits,
    grid: typing.Optional[typing.Any] = None,
    spec: KernelSpec = KernelSpec(),
    n_boot: int = constants.DEFAULT_N_BOOT,
    level: float = constants.DEFAULT_CONFIDENCE_LEVEL,
    seed: int = constants.DEFAULT_SEED,
    trim_threshold: typing.Optional[float] = None,
    n_jobs: typing.Optional[int] = None,
) -> CmeCurve:
    """Residual-on-residual local regression under the partially linear model.

    With Y~ = Y - E[Y|V] and D~ = D - E[D|V], the local model at x0 regresses
    Y~ on a free level, D~ and D~ (X - x0); the D~ coefficient is the effect
    and its robust sandwich error is the orthogonal-score error. Points where
    D~ barely varies inside the window are trimmed.
    """
    if nuisances.n != dataset.n:
        raise ValidationError("nuisance fits and dataset have different lengths")
    grid = _resolve_grid(dataset, grid)
    problem = LocalLinearProblem(
        dataset.moderator,
        dataset.outcome - nuisances.outcome_marginal,
        treatment=dataset.treatment - nuisances.treatment_marginal,
        moderator_trend=False,
    )
    return smooth_curve(
        problem,
        grid,
        spec,
        n_boot,
        level,
        seed,
        trim_threshold,
        n_jobs,
        {
            "estimator": Estimator.DML_PLM.value,
            "learner": nuisances.learner,
            "nuisance_bootstrap": "frozen",
            "warnings": [],
        },
    )


@dataclass(frozen=True)
class InteractedDesign:
    """The fully interacted model as monomials over (D, X, Z).

    `fixed` terms always enter the refit. `controls` are candidates for
    selection: every basis term b of (X, Z) together with X b and D b, with
    duplicates and fixed terms removed.
    """

    names: typing.Tuple[str, ...]
    fixed: typing.Tuple[Monomial, ...]
    controls: typing.Tuple[Monomial, ...]

    @classmethod
    def for_dataset(cls, dataset: Dataset) -> "InteractedDesign":
        p = dataset.p
        names = (dataset.column_names[1], dataset.column_names[2], *dataset.covariate_names)
        width = p + 2

        def unit(*powers: int) -> Monomial:
            return tuple(powers) + (0,) * (width - len(powers))

        fixed = [unit(1, 0), unit(0, 1), unit(1, 1)]
        if not dataset.treatment_binary:
            fixed += [unit(2, 0), unit(2, 1)]

        basis = BasisExpansion.for_dataset(dataset).monomials
        seen = set(fixed)
        controls = []
        for base in basis:
            term = (0, *base)
            for shift in ((0, 0), (0, 1), (1, 0)):
                candidate = (term[0] + shift[0], term[1] + shift[1], *term[2:])
                if candidate not in seen:
                    seen.add(candidate)
                    controls.append(candidate)
        return cls(names=names, fixed=tuple(fixed), controls=tuple(controls))

    def label(self, monomial: Monomial) -> str:
        return _monomial_label(self.names, monomial)

    def values(self, dataset: Dataset) -> np.ndarray:
        return np.column_stack([dataset.treatment, dataset.moderator, dataset.covariates])

    def effect_weights(
        self, terms: typing.Sequence[Monomial], values: np.ndarray, grid: np.ndarray
    ) -> np.ndarray:
        """
        Rows c(x) with c(x)'beta = the derivative of the fitted surface in D at
        X = x, averaged over the sample's D and Z. Returns a grid x terms
        matrix; the intercept column is included as zero.
        """
        weights = np.zeros((grid.shape[0], len(terms) + 1))
        for j, term in enumerate(terms, start=1):
            power_d, power_x = term[0], term[1]
            if power_d == 0:
                continue
            rest = (power_d - 1, 0, *term[2:])
            average = float(np.mean(_evaluate_monomials(values, [rest])))
            weights[:, j] = power_d * average * grid**power_x
        return weights


def _select(design: np.ndarray, response: np.ndarray) -> typing.Set[int]:
    if design.shape[1] == 0:
        return set()
    lam = plugin_lambda(design, response)
    return set(lasso_cd(design, response, lam).active_set)


def estimate_pds_lasso(
    dataset: Dataset,
    grid: typing.Optional[typing.Any] = None,
    n_boot: int = constants.DEFAULT_N_BOOT,
    level: float = constants.DEFAULT_CONFIDENCE_LEVEL,
    seed: int = constants.DEFAULT_SEED,
    n_jobs: typing.Optional[int] = None,
    spec: KernelSpec = KernelSpec(),
) -> CmeCurve:
    """Post-double-selection on the fully interacted model.

    Controls are selected by plug-in LASSO in the outcome equation (all
    controls) and in the D and D X equations (controls without D). Y is then
    refitted by OLS on the fixed terms plus the union of selections, and the
    marginal effect at x is the derivative of the fit in D averaged over the
    sample, with delta-method errors. The bootstrap keeps the selection fixed.

    Without covariates the kernel estimator's curve is returned, with the
    fallback recorded in the metadata.

    Raises:
        RankDeficiencyError: The refit design is collinear.
    """
    grid = _resolve_grid(dataset, grid)
    if dataset.p == 0:
        curve = estimate_kernel(dataset, grid, spec, n_boot, level, seed, n_jobs=n_jobs)
        metadata = dict(curve.metadata, estimator=Estimator.PDS_LASSO.value, fallback="kernel")
        logger.info("no covariates: pds_lasso falls back to the kernel estimator")
        return dataclasses.replace(curve, metadata=metadata)

    design = InteractedDesign.for_dataset(dataset)
    values = design.values(dataset)
    controls = _evaluate_monomials(values, design.controls)
    without_d = [j for j, term in enumerate(design.controls) if term[0] == 0]

    selected = _select(controls, dataset.outcome)
    d, x = dataset.treatment, dataset.moderator
    for target in (d, d * x):
        chosen = _select(controls[:, without_d], target)
        selected |= {without_d[j] for j in chosen}
    selected = sorted(selected)
    logger.info("double selection kept %d of %d controls", len(selected), len(design.controls))

    terms = list(design.fixed) + [design.controls[j] for j in selected]
    labels = ["const"] + [design.label(t) for t in terms]

    def fit(rows: typing.Optional[np.ndarray]) -> typing.Tuple[np.ndarray, np.ndarray, WlsFit]:
        v = values if rows is None else values[rows]
        y = dataset.outcome if rows is None else dataset.outcome[rows]
        matrix = np.column_stack([np.ones(v.shape[0]), _evaluate_monomials(v, terms)])
        result = wls(matrix, y, labels=labels)
        weights = design.effect_weights(terms, v, grid)
        theta = weights @ result.coefficients
        variance = np.einsum("gi,ij,gj->g", weights, result.covariance, weights)
        return theta, np.sqrt(np.clip(variance, 0.0, None)), result

    theta, se, result = fit(None)
    trimmed = np.zeros(grid.shape[0], dtype=bool)
    critical = None
    if n_boot > 0:
        draws = pairs_bootstrap(dataset.n, n_boot, seed, lambda rows: fit(rows)[0], n_jobs)
        critical = sup_t_critical_value(theta, se, draws, ~trimmed, level)

    metadata = {
        "estimator": Estimator.PDS_LASSO.value,
        "bandwidth": None,
        "seed": seed,
        "n": dataset.n,
        "n_boot": n_boot,
        "selected_controls": [design.label(design.controls[j]) for j in selected],
        "coefficients": dict(zip(result.labels, result.coefficients.tolist())),
        "coefficient_std_errors": dict(zip(result.labels, result.std_errors.tolist())),
    }
    return build_curve(grid, theta, se, trimmed, level, critical, metadata)
