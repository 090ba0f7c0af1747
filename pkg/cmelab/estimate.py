"""
One entry point for every estimator: `estimate(dataset, request)`.
"""
import logging
import typing

from .data import CmeCurve, Dataset, EstimationRequest
from .debiased import (
    LearnerParams,
    NuisanceFits,
    estimate_aipw,
    estimate_dml_plm,
    estimate_pds_lasso,
    fit_nuisances,
)
from .kernel import KernelSpec, estimate_kernel
from .linear import BinSpec, estimate_binning, estimate_linear
from .types import Estimator

logger = logging.getLogger(__name__)


def kernel_spec(request: EstimationRequest) -> KernelSpec:
    return KernelSpec(
        kernel=request.kernel,
        bandwidth=request.numeric_bandwidth,
        cv_folds=request.cv_folds,
    )


def estimate(
    dataset: Dataset,
    request: EstimationRequest = EstimationRequest(),
    n_jobs: typing.Optional[int] = None,
    params: LearnerParams = LearnerParams(),
    nuisances: typing.Optional[NuisanceFits] = None,
) -> CmeCurve:
    """Runs the estimator named by the request.

    The binning estimator evaluates at its within-bin medians and ignores the
    grid. `request.treatment_binary` declares the dataset's treatment binary,
    which AIPW requires. The debiased estimators cross-fit their nuisances with the request's
    learner and seed unless `nuisances` is given.

    Args:
        dataset (Dataset): The data.
        request (EstimationRequest, optional): What to estimate and how.
        n_jobs (int, optional): Threads for bootstrap and fold loops.
        params (LearnerParams, optional): Nuisance learner hyperparameters.
        nuisances (NuisanceFits, optional): Precomputed nuisance fits.
    """
    estimator = request.estimator
    if request.treatment_binary:
        dataset = dataset.declared_binary()
    logger.info("estimating with %s on n=%d", estimator.value, dataset.n)
    if estimator is Estimator.BINNING:
        spec = BinSpec.quantiles(dataset.moderator, request.n_bins)
        return estimate_binning(
            dataset,
            spec,
            interacted_covariates=request.bin_interacted_covariates,
            n_boot=request.n_boot,
            level=request.confidence_level,
            seed=request.seed,
        )

    grid = request.resolve_grid(dataset)
    common = dict(n_boot=request.n_boot, level=request.confidence_level, seed=request.seed)
    if estimator is Estimator.LINEAR:
        return estimate_linear(dataset, grid, n_jobs=n_jobs, **common)
    if estimator is Estimator.KERNEL:
        return estimate_kernel(
            dataset,
            grid,
            kernel_spec(request),
            trim_threshold=request.trim_threshold,
            n_jobs=n_jobs,
            **common,
        )
    if estimator is Estimator.PDS_LASSO:
        return estimate_pds_lasso(dataset, grid, n_jobs=n_jobs, spec=kernel_spec(request), **common)

    if nuisances is None:
        nuisances = fit_nuisances(
            dataset,
            request.learner,
            request.k_folds,
            request.seed,
            params=params,
            n_jobs=n_jobs,
        )
    smoother = estimate_aipw if estimator is Estimator.AIPW_LASSO else estimate_dml_plm
    return smoother(
        dataset,
        nuisances,
        grid,
        kernel_spec(request),
        trim_threshold=request.trim_threshold,
        n_jobs=n_jobs,
        **common,
    )
