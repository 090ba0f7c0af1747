"""
Test the local-linear kernel estimator, bandwidth selection and its bootstrap
bands.
"""
import numpy as np
import pytest

from cmelab.bench import run_mc
from cmelab.data import EstimationRequest
from cmelab.dgp import cape_oracle, cme_oracle, get_dgp, sample
from cmelab.exceptions import BootstrapFailureError, InsufficientDataError, ValidationError
from cmelab.kernel import (
    KernelSpec,
    LocalLinearProblem,
    estimate_kernel,
    kernel_weights,
    local_linear_fit,
    select_bandwidth,
)
from cmelab.linear import estimate_linear
from cmelab.numerics import fold_assignment
from cmelab.types import Kernel


def test_kernel_weights():
    u = np.array([-1.5, -1.0, 0.0, 0.5, 1.0])
    assert np.allclose(kernel_weights(u, Kernel.EPANECHNIKOV), [0, 0, 1, 0.75, 0])
    assert np.allclose(kernel_weights(u, Kernel.UNIFORM), [0, 1, 1, 1, 1])
    assert kernel_weights(np.zeros(1), Kernel.GAUSSIAN)[0] == 1.0
    assert np.all(kernel_weights(u, Kernel.GAUSSIAN) > 0)


def test_kernel_spec_parses_auto():
    assert KernelSpec(bandwidth="auto").bandwidth is None
    assert KernelSpec(kernel="gaussian").kernel is Kernel.GAUSSIAN
    with pytest.raises(ValidationError):
        KernelSpec(bandwidth=0.0)
    with pytest.raises(ValidationError):
        KernelSpec(bandwidth_grid=(0.5, 0.2))


@pytest.mark.parametrize("dgp", ["key_a1", "fig3_binary"])
def test_wide_uniform_window_reproduces_the_linear_model(dgp):
    dataset = sample(get_dgp(dgp), 800, seed=6)
    grid = [-0.5, 0.0, 0.5]
    spec = KernelSpec(kernel=Kernel.UNIFORM, bandwidth=float(np.ptp(dataset.moderator)))
    kernel = estimate_kernel(dataset, grid, spec, n_boot=0)
    linear = estimate_linear(dataset, grid, n_boot=0)
    assert not kernel.trimmed.any()
    assert np.allclose(kernel.estimate, linear.estimate, atol=1e-8)
    assert np.allclose(kernel.std_error, linear.std_error, atol=1e-8)


def test_local_fit_on_the_key_process(key_data):
    fit = local_linear_fit(key_data, 1.0, KernelSpec(bandwidth=0.5))
    assert abs(fit.theta - 0.5) < 4 * fit.se
    assert fit.effective_n > 100
    assert fit.coefficients.shape == (4,)


def test_kernel_constant_effect(homogeneous_data):
    curve = estimate_kernel(
        homogeneous_data, [-1.0, 0.0, 1.0], KernelSpec(bandwidth=0.5), n_boot=0
    )
    assert np.all(np.abs(curve.estimate - 2.0) < 4 * curve.std_error)
    assert curve.metadata["bandwidth"] == 0.5
    assert curve.metadata["kernel"] == "epanechnikov"


def test_local_fit_without_enough_data(small_key_data):
    with pytest.raises(InsufficientDataError):
        local_linear_fit(small_key_data, 0.123456, KernelSpec(bandwidth=1e-6))


def test_local_fit_needs_a_bandwidth(small_key_data):
    with pytest.raises(ValidationError, match="numeric bandwidth"):
        local_linear_fit(small_key_data, 0.0, KernelSpec())


def test_narrow_bandwidth_trims_points(small_key_data):
    curve = estimate_kernel(small_key_data, spec=KernelSpec(bandwidth=0.01), n_boot=0)
    assert curve.trimmed.all()
    assert np.all(np.isnan(curve.estimate))
    assert curve.metadata["trim_threshold"] == 16.0


def test_trimming_at_the_edges(small_key_data):
    x = small_key_data.moderator
    grid = [float(x.min()), 0.0]
    curve = estimate_kernel(small_key_data, grid, KernelSpec(bandwidth=0.3), n_boot=0)
    assert curve.trimmed.tolist() == [True, False]
    assert np.isnan(curve.ci_pointwise[0][0])
    assert np.isfinite(curve.estimate[1])


def test_no_bootstrap_means_no_uniform_band(small_key_data):
    curve = estimate_kernel(small_key_data, spec=KernelSpec(bandwidth=0.8), n_boot=0)
    assert curve.ci_uniform is None
    assert curve.metadata["uniform_critical_value"] is None


def test_constant_treatment_in_the_window_is_trimmed():
    x = np.linspace(-1, 1, 400)
    d = np.where(x > 0, x**2, 0.0)
    problem = LocalLinearProblem(x, d + 0.1 * np.sin(7 * x), treatment=d)
    curve = problem.fit_curve(np.array([-0.5, 0.5]), 0.2, Kernel.EPANECHNIKOV)
    assert curve.trimmed.tolist() == [True, False]


def test_bandwidth_selection_is_deterministic(small_key_data):
    spec = KernelSpec()
    first = select_bandwidth(small_key_data, spec, seed=3)
    assert first == select_bandwidth(small_key_data, spec, seed=3)
    assert first in spec.candidates(small_key_data.moderator)


def test_linear_data_selects_a_wide_bandwidth():
    dataset = sample(get_dgp("linear_null"), 1000, seed=2)
    spec = KernelSpec()
    candidates = spec.candidates(dataset.moderator)
    assert select_bandwidth(dataset, spec, seed=0) >= np.median(candidates)


def test_vectorised_held_out_fits_match_point_by_point_fits(small_key_data):
    problem = LocalLinearProblem.for_dataset(small_key_data)
    spec = KernelSpec(bandwidth_grid=(0.15, 0.3, 0.6, 1.2, 2.4))
    folds = fold_assignment(problem.n, spec.cv_folds, seed=1)
    fast = np.array([problem.cv_error(h, spec, folds) for h in spec.bandwidth_grid])
    slow = np.array(
        [problem.cv_error(h, spec, folds, per_point=True) for h in spec.bandwidth_grid]
    )
    assert np.array_equal(np.isinf(fast), np.isinf(slow))
    finite = np.isfinite(slow)
    assert finite.any()
    assert np.allclose(fast[finite], slow[finite], rtol=1e-6)
    assert problem.select_bandwidth(spec, seed=1) == problem.select_bandwidth(
        spec, seed=1, per_point=True
    )


def test_held_out_predictions_match_local_fits(small_key_data):
    problem = LocalLinearProblem.for_dataset(small_key_data)
    held_out = np.arange(problem.n) < 100
    train = problem.take(np.flatnonzero(~held_out))
    test = np.flatnonzero(held_out & (np.abs(problem.moderator) < 1.5))
    predicted = problem.held_out_predictions(train, test, 0.8, Kernel.EPANECHNIKOV, block=32)
    for j, i in enumerate(test):
        coefficients = train.fit(problem.moderator[i], 0.8, Kernel.EPANECHNIKOV).coefficients
        row = problem.design(np.array([i]), problem.moderator[i])[0]
        assert predicted[j] == pytest.approx(row @ coefficients, rel=1e-6, abs=1e-8)


def test_a_degenerate_held_out_fit_rules_out_the_bandwidth():
    dataset = sample(get_dgp("key_a1"), 200, seed=4)
    problem = LocalLinearProblem.for_dataset(dataset)
    spec = KernelSpec(bandwidth_grid=(0.01, 3.0))
    folds = fold_assignment(problem.n, spec.cv_folds, seed=0)
    assert problem.cv_error(0.01, spec, folds) == float("inf")
    assert np.isfinite(problem.cv_error(3.0, spec, folds))
    assert problem.select_bandwidth(spec, seed=0) == 3.0


def test_wider_bandwidths_give_smoother_curves():
    dataset = sample(get_dgp("linear_null"), 5000, seed=6)
    grid = np.linspace(-1.0, 1.0, 21)
    variation = []
    for h in (0.25, 0.5, 1.0, 2.0):
        curve = estimate_kernel(dataset, grid, KernelSpec(bandwidth=h), n_boot=0)
        variation.append(np.sum(np.abs(np.diff(curve.estimate))))
    assert np.all(np.diff(variation) < 0)


@pytest.mark.parametrize("kernel, bandwidth", [("uniform", 0.4), ("gaussian", 0.3)])
def test_estimates_do_not_hinge_on_the_kernel(key_data, kernel, bandwidth):
    grid = [-1.0, 0.0, 1.0]
    reference = estimate_kernel(key_data, grid, KernelSpec(bandwidth=0.6), n_boot=0)
    other = estimate_kernel(key_data, grid, KernelSpec(kernel, bandwidth), n_boot=0)
    pooled = np.sqrt(reference.std_error**2 + other.std_error**2)
    assert np.all(np.abs(reference.estimate - other.estimate) < 2 * pooled)


@pytest.mark.slow
def test_cross_validated_kernel_beats_the_linear_model():
    spec = get_dgp("key_a1")
    dataset = sample(spec, 5000, seed=17)
    grid = np.linspace(-1.5, 1.5, 7)
    truth = cme_oracle(spec, grid)
    kernel = estimate_kernel(dataset, grid, KernelSpec(), n_boot=0)
    linear = estimate_linear(dataset, grid, n_boot=0)
    assert not kernel.trimmed.any()
    kernel_rmse = np.sqrt(np.mean((kernel.estimate - truth) ** 2))
    linear_rmse = np.sqrt(np.mean((linear.estimate - truth) ** 2))
    assert kernel_rmse < linear_rmse


@pytest.mark.slow
def test_errors_shrink_with_the_sample_size():
    spec = get_dgp("key_a1")
    grid = np.array([-1.0, 0.0, 1.0])
    kernel = KernelSpec(bandwidth=0.5)
    small = estimate_kernel(sample(spec, 2500, seed=21), grid, kernel, n_boot=0)
    large = estimate_kernel(sample(spec, 40000, seed=22), grid, kernel, n_boot=0)
    assert np.all(large.std_error < small.std_error / 3)
    assert np.all(np.abs(large.estimate - cme_oracle(spec, grid)) < 4 * large.std_error)
    assert np.max(np.abs(large.estimate - cme_oracle(spec, grid))) < 0.15


def test_bootstrap_does_not_depend_on_threads(small_key_data):
    spec = KernelSpec(bandwidth=0.8)
    grid = [-1.0, 0.0, 1.0]
    single = estimate_kernel(small_key_data, grid, spec, n_boot=60, seed=9, n_jobs=1)
    threaded = estimate_kernel(small_key_data, grid, spec, n_boot=60, seed=9, n_jobs=4)
    assert single.to_dict() == threaded.to_dict()
    lower, upper = single.ci_uniform
    assert np.all(lower <= single.ci_pointwise[0])
    assert np.all(upper >= single.ci_pointwise[1])


def test_too_few_bootstrap_replicates(small_key_data):
    with pytest.raises(BootstrapFailureError, match="need at least 50"):
        estimate_kernel(small_key_data, [0.0], KernelSpec(bandwidth=0.8), n_boot=10)


@pytest.mark.slow
def test_kernel_recovers_a_nonlinear_effect():
    spec = get_dgp("fig4_continuous")
    dataset = sample(spec, 20000, seed=1)
    grid = np.linspace(-1.5, 1.5, 13)
    curve = estimate_kernel(dataset, grid, KernelSpec(), n_boot=0)
    assert np.max(np.abs(curve.estimate - cme_oracle(spec, grid))) < 0.25
    # At x = 1 the marginal effect is 0 while the partial effect at d = 0 is -1.
    at_one = curve.estimate[10]
    assert abs(at_one - 0.0) < abs(at_one - cape_oracle(spec, 0.0, 1.0))


@pytest.mark.slow
def test_kernel_band_coverage_on_the_key_process():
    request = EstimationRequest(grid=(-1.0, 0.0, 1.0), bandwidth=0.6, n_boot=200)
    report = run_mc(get_dgp("key_a1"), request, 2000, 100, seed=1)
    assert report.coverage_uniform >= 0.85
    assert np.all(report.coverage_pointwise >= 0.85)
