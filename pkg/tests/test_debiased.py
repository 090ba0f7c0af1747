"""
Test the basis expansion, cross-fitted nuisances and the AIPW, PDS-LASSO and
DML estimators.
"""
import dataclasses

import numpy as np
import pytest
from sklearn.metrics import roc_auc_score

from cmelab.bench import run_mc
from cmelab.data import Dataset, EstimationRequest
from cmelab.debiased import (
    BasisExpansion,
    InteractedDesign,
    NuisanceFits,
    aipw_pseudo_outcome,
    clip_propensity,
    estimate_aipw,
    estimate_dml_plm,
    estimate_pds_lasso,
    fit_nuisances,
)
from cmelab.dgp import cme_oracle, fig3_propensity, get_dgp, sample
from cmelab.estimate import estimate
from cmelab.exceptions import DegenerateFoldError, OverlapFailureError, ValidationError
from cmelab.kernel import KernelSpec, estimate_kernel
from cmelab.linear import estimate_linear
from cmelab.numerics import fold_assignment, rng_stream
from cmelab.types import Kernel


@pytest.fixture(scope="module")
def fig3_data() -> Dataset:
    return sample(get_dgp("fig3_binary"), 1500, seed=3)


@pytest.fixture(scope="module")
def randomized_binary() -> Dataset:
    """
    D is a fair coin, so e = 0.5, and the effect is 1 + X.
    """
    rng = rng_stream(31, 0)
    n = 4000
    x = rng.uniform(-1, 1, n)
    d = (rng.uniform(size=n) < 0.5).astype(float)
    y = d * (1 + x) + rng.standard_normal(n)
    return Dataset.from_arrays(y, d, x, treatment_binary=True)


@pytest.fixture(scope="module")
def randomized_continuous() -> Dataset:
    rng = rng_stream(32, 0)
    n = 2000
    x = rng.uniform(-1, 1, n)
    d = rng.standard_normal(n)
    y = d * (1 + x) + x + rng.standard_normal(n)
    return Dataset.from_arrays(y, d, x)


def test_basis_labels():
    basis = BasisExpansion(("X", "Z1"))
    assert basis.labels == ["X", "X^2", "X^3", "Z1", "Z1^2", "Z1^3", "X*Z1"]
    values = np.array([[2.0, 3.0]])
    assert np.allclose(basis.transform(values), [[2, 4, 8, 3, 9, 27, 6]])


def test_basis_for_dataset(fig3_data):
    basis = BasisExpansion.for_dataset(fig3_data)
    assert basis.names == ("X", "Z1", "Z2")
    assert len(basis.labels) == 12
    assert BasisExpansion.for_dataset(fig3_data, include_moderator=False).names == ("Z1", "Z2")
    with pytest.raises(ValidationError):
        basis.transform(np.ones((3, 2)))


def test_interacted_design_terms(fig3_data):
    design = InteractedDesign.for_dataset(fig3_data)
    labels = [design.label(t) for t in design.fixed]
    assert labels == ["D", "X", "D*X"]
    control_labels = {design.label(t) for t in design.controls}
    assert {"Z1", "D*Z1", "X*Z1", "X^2"} <= control_labels
    assert not control_labels & set(labels)
    assert len(control_labels) == len(design.controls)

    # A 0/1 treatment that is not declared binary keeps its squared terms.
    undeclared = Dataset.from_arrays(
        fig3_data.outcome, fig3_data.treatment, fig3_data.moderator, fig3_data.covariates
    )
    assert len(InteractedDesign.for_dataset(undeclared).fixed) == 5


def test_constant_outcome_is_predicted_exactly(randomized_continuous):
    d = randomized_continuous
    flat = Dataset.from_arrays(np.full(d.n, 2.5), d.treatment, d.moderator)
    fits = fit_nuisances(flat, k_folds=3, seed=1)
    assert np.allclose(fits.outcome_marginal, 2.5, atol=1e-12)
    assert fits.propensity is None
    assert fits.learner == "lasso_basis"


def test_held_out_fold_ignores_its_own_outcomes(randomized_continuous):
    d = randomized_continuous
    folds = fold_assignment(d.n, 5, seed=2)
    perturbed_y = np.where(folds == 0, d.outcome + 100.0, d.outcome)
    perturbed = Dataset.from_arrays(perturbed_y, d.treatment, d.moderator)
    base = fit_nuisances(d, folds=folds, seed=2)
    other = fit_nuisances(perturbed, folds=folds, seed=2)
    held_out = folds == 0
    assert np.array_equal(base.outcome_marginal[held_out], other.outcome_marginal[held_out])
    assert not np.allclose(base.outcome_marginal[~held_out], other.outcome_marginal[~held_out])


def test_fold_labels_do_not_matter(randomized_continuous):
    d = randomized_continuous
    folds = fold_assignment(d.n, 4, seed=5)
    base = fit_nuisances(d, folds=folds, seed=5)
    relabelled = fit_nuisances(d, folds=(folds + 1) % 4, seed=5)
    assert np.array_equal(base.outcome_marginal, relabelled.outcome_marginal)
    assert np.array_equal(base.treatment_marginal, relabelled.treatment_marginal)


def test_nuisances_are_seeded(fig3_data):
    first = fit_nuisances(fig3_data, k_folds=3, seed=8)
    second = fit_nuisances(fig3_data, k_folds=3, seed=8)
    assert np.array_equal(first.propensity, second.propensity)
    assert np.array_equal(first.fold_id, second.fold_id)
    assert set(np.unique(first.fold_id)) == {0, 1, 2}
    assert first.has_binary_components
    assert np.all((first.propensity >= 0.01) & (first.propensity <= 0.99))
    assert np.array_equal(first.treatment_marginal, first.propensity)


def test_boosted_trees_nuisances(fig3_data):
    fits = fit_nuisances(fig3_data, learner="boosted_trees", k_folds=2, seed=1)
    assert fits.learner == "boosted_trees"
    assert fits.outcome_treated.shape == (fig3_data.n,)
    assert np.all(np.isfinite(fits.outcome_control))


def test_everyone_treated_fails():
    x = np.linspace(-1, 1, 40)
    dataset = Dataset.from_arrays(x, np.ones(40), x, treatment_binary=True)
    with pytest.raises(OverlapFailureError, match="every unit is treated"):
        fit_nuisances(dataset, k_folds=2)


def test_training_fold_with_one_class_fails():
    x = np.linspace(-1, 1, 100)
    folds = fold_assignment(100, 5, seed=0)
    # Every treated unit sits in fold 2, so its training data has none.
    d = (folds == 2).astype(float)
    dataset = Dataset.from_arrays(x + d, d, x, treatment_binary=True)
    with pytest.raises(DegenerateFoldError) as info:
        fit_nuisances(dataset, folds=folds, seed=0)
    assert info.value.fold == 2


def test_clip_counts_grow_with_tighter_bounds():
    p = np.linspace(0.0, 1.0, 101)
    counts = [clip_propensity(p, bounds)[1] for bounds in [(0.01, 0.99), (0.05, 0.95), (0.2, 0.8)]]
    assert counts == sorted(counts)
    clipped, _ = clip_propensity(p, (0.05, 0.95))
    assert clipped.min() == 0.05 and clipped.max() == 0.95
    with pytest.raises(ValidationError):
        clip_propensity(p, (0.5, 0.2))


def known_nuisances(dataset: Dataset, propensity) -> NuisanceFits:
    zeros = np.zeros(dataset.n)
    return NuisanceFits.from_predictions(
        outcome_marginal=zeros,
        propensity=propensity,
        outcome_treated=zeros,
        outcome_control=zeros,
    )


def test_pseudo_outcome_under_a_known_design(randomized_binary):
    nuisances = known_nuisances(randomized_binary, np.full(randomized_binary.n, 0.5))
    gamma = aipw_pseudo_outcome(randomized_binary, nuisances)
    d, y = randomized_binary.treatment, randomized_binary.outcome
    assert np.allclose(gamma, 2 * d * y - 2 * (1 - d) * y)


def test_wide_window_level_is_the_mean_pseudo_outcome(fig3_data):
    z = fig3_data.covariates
    nuisances = known_nuisances(fig3_data, fig3_propensity(fig3_data.moderator, z))
    x = fig3_data.moderator
    spec = KernelSpec(kernel=Kernel.UNIFORM, bandwidth=2 * float(np.ptp(x)))
    curve = estimate_aipw(fig3_data, nuisances, [float(x.mean())], spec, n_boot=0)
    gamma = aipw_pseudo_outcome(fig3_data, nuisances)
    assert curve.estimate[0] == pytest.approx(gamma.mean(), abs=1e-8)


def test_aipw_recovers_a_randomized_effect(randomized_binary):
    nuisances = known_nuisances(randomized_binary, np.full(randomized_binary.n, 0.5))
    grid = np.array([-0.5, 0.0, 0.5])
    curve = estimate_aipw(
        randomized_binary, nuisances, grid, KernelSpec(bandwidth=0.5), n_boot=100, seed=2
    )
    assert np.all(np.abs(curve.estimate - (1 + grid)) < 3.5 * curve.std_error)
    assert curve.metadata["estimator"] == "aipw_lasso"
    assert curve.metadata["warnings"] == []
    assert curve.ci_uniform is not None


def test_aipw_warns_when_many_propensities_are_clipped(randomized_binary):
    propensity = np.full(randomized_binary.n, 0.5)
    propensity[: randomized_binary.n // 5] = 0.001
    nuisances = known_nuisances(randomized_binary, propensity)
    assert nuisances.clip_rate == pytest.approx(0.2)
    with pytest.warns(UserWarning, match="clipped"):
        curve = estimate_aipw(
            randomized_binary, nuisances, [0.0], KernelSpec(bandwidth=0.5), n_boot=0
        )
    assert len(curve.metadata["warnings"]) == 1


def test_aipw_fails_when_most_propensities_are_clipped(randomized_binary):
    propensity = np.full(randomized_binary.n, 0.999)
    nuisances = known_nuisances(randomized_binary, propensity)
    with pytest.raises(OverlapFailureError, match="overlap failure"):
        estimate_aipw(randomized_binary, nuisances, [0.0], KernelSpec(bandwidth=0.5), n_boot=0)


def test_aipw_needs_a_binary_treatment(randomized_continuous):
    zeros = np.zeros(randomized_continuous.n)
    nuisances = NuisanceFits.from_predictions(zeros, treatment_marginal=zeros)
    with pytest.raises(ValidationError, match="binary"):
        estimate_aipw(randomized_continuous, nuisances)


def test_zero_one_treatment_must_be_declared(randomized_binary):
    undeclared = Dataset.from_arrays(
        randomized_binary.outcome, randomized_binary.treatment, randomized_binary.moderator
    )
    request = EstimationRequest(
        estimator="aipw_lasso", grid=(-0.5, 0.0, 0.5), bandwidth=0.5, n_boot=0, k_folds=2
    )
    with pytest.raises(ValidationError, match="declared binary"):
        estimate(undeclared, request)
    assert fit_nuisances(undeclared, k_folds=2).propensity is None

    curve = estimate(undeclared, dataclasses.replace(request, treatment_binary=True))
    assert curve.metadata["estimator"] == "aipw_lasso"
    assert np.all(np.isfinite(curve.estimate))


def test_pds_without_covariates_falls_back_to_the_kernel(small_key_data):
    spec = KernelSpec(bandwidth=0.8)
    grid = [-1.0, 0.0, 1.0]
    pds = estimate_pds_lasso(small_key_data, grid, n_boot=0, spec=spec)
    kernel = estimate_kernel(small_key_data, grid, spec, n_boot=0)
    assert np.array_equal(pds.estimate, kernel.estimate)
    assert pds.metadata["estimator"] == "pds_lasso"
    assert pds.metadata["fallback"] == "kernel"


def test_pds_with_many_noise_covariates():
    rng = rng_stream(33, 0)
    n = 3000
    x = rng.standard_normal(n)
    z = rng.standard_normal((n, 10))
    d = 0.5 * x + 0.5 * z[:, 0] + rng.standard_normal(n)
    y = 1 + d + x + 0.5 * d * x + z[:, 0] + rng.standard_normal(n)
    dataset = Dataset.from_arrays(y, d, x, z)
    grid = np.array([-1.0, 0.0, 1.0])
    curve = estimate_pds_lasso(dataset, grid, n_boot=0)
    assert np.all(np.abs(curve.estimate - (1 + 0.5 * grid)) < 4 * curve.std_error)
    coefficients = curve.metadata["coefficients"]
    errors = curve.metadata["coefficient_std_errors"]
    assert abs(coefficients["D*X"] - 0.5) < 4 * errors["D*X"]
    assert "Z1" in curve.metadata["selected_controls"]
    assert len(curve.metadata["selected_controls"]) < 60


def test_pds_bootstrap_band(fig3_data):
    curve = estimate_pds_lasso(fig3_data, [-1.0, 0.0, 1.0], n_boot=60, seed=4)
    assert curve.ci_uniform is not None
    assert np.all(curve.ci_uniform[0] <= curve.ci_pointwise[0])


def test_dml_agrees_with_the_kernel_under_randomization(randomized_continuous):
    d = randomized_continuous
    grid = np.array([-0.5, 0.0, 0.5])
    spec = KernelSpec(bandwidth=0.5)
    nuisances = fit_nuisances(d, k_folds=5, seed=1)
    dml = estimate_dml_plm(d, nuisances, grid, spec, n_boot=0)
    kernel = estimate_kernel(d, grid, spec, n_boot=0)
    pooled = np.sqrt(dml.std_error**2 + kernel.std_error**2)
    assert np.all(np.abs(dml.estimate - kernel.estimate) < 3 * pooled)
    assert np.all(np.abs(dml.estimate - (1 + grid)) < 4 * dml.std_error)
    assert dml.metadata["estimator"] == "dml_plm"


def test_dml_trims_where_the_residual_treatment_vanishes(randomized_continuous):
    d = randomized_continuous
    x = d.moderator
    nuisances = NuisanceFits.from_predictions(
        outcome_marginal=np.zeros(d.n),
        treatment_marginal=np.where(x < 0, d.treatment, 0.0),
    )
    curve = estimate_dml_plm(d, nuisances, [-0.5, 0.5], KernelSpec(bandwidth=0.3), n_boot=0)
    assert curve.trimmed.tolist() == [True, False]


@pytest.mark.slow
def test_propensity_model_ranks_and_calibrates():
    dataset = sample(get_dgp("fig3_binary"), 5000, seed=9)
    fits = fit_nuisances(dataset, seed=9)
    truth = fig3_propensity(dataset.moderator, dataset.covariates)
    assert roc_auc_score(dataset.treatment, fits.propensity) > 0.6
    assert np.corrcoef(truth, fits.propensity)[0, 1] > 0.8
    slope = np.polyfit(fits.propensity, truth, 1)[0]
    assert 0.7 < slope < 1.3


@pytest.mark.slow
@pytest.mark.parametrize("learner", ["lasso_basis", "boosted_trees"])
def test_aipw_on_the_binary_process(learner):
    spec = get_dgp("fig3_binary")
    dataset = sample(spec, 10000, seed=2)
    grid = np.array([-1.0, 0.0, 1.0])
    nuisances = fit_nuisances(dataset, learner, seed=2)
    curve = estimate_aipw(dataset, nuisances, grid, n_boot=0)
    assert np.all(np.abs(curve.estimate - cme_oracle(spec, grid)) < 4 * curve.std_error)


def test_aipw_with_the_true_propensity_and_no_outcome_model():
    spec = get_dgp("fig3_binary")
    dataset = sample(spec, 20000, seed=7)
    zeros = np.zeros(dataset.n)
    nuisances = NuisanceFits.from_predictions(
        outcome_marginal=zeros,
        propensity=fig3_propensity(dataset.moderator, dataset.covariates),
        outcome_treated=zeros,
        outcome_control=zeros,
    )
    grid = np.array([-1.0, 0.0, 1.0])
    curve = estimate_aipw(dataset, nuisances, grid, KernelSpec(bandwidth=0.6), n_boot=0)
    assert not curve.trimmed.any()
    assert np.all(np.abs(curve.estimate - cme_oracle(spec, grid)) < 4 * curve.std_error)
    assert nuisances.clipped < dataset.n // 100


def test_aipw_with_the_true_outcome_model_and_a_constant_propensity():
    spec = get_dgp("fig3_binary")
    dataset = sample(spec, 5000, seed=8)
    x, z = dataset.moderator, dataset.covariates
    nuisances = NuisanceFits.from_predictions(
        outcome_marginal=np.zeros(dataset.n),
        propensity=np.full(dataset.n, 0.5),
        outcome_treated=spec.response(1.0, x, z, spec.parameters),
        outcome_control=spec.response(0.0, x, z, spec.parameters),
    )
    grid = np.array([-1.0, 0.0, 1.0])
    curve = estimate_aipw(dataset, nuisances, grid, KernelSpec(bandwidth=0.6), n_boot=0)
    assert np.all(np.abs(curve.estimate - cme_oracle(spec, grid)) < 4 * curve.std_error)


def test_pds_beats_the_linear_model_on_the_binary_process():
    spec = get_dgp("fig3_binary")
    dataset = sample(spec, 5000, seed=12)
    grid = np.linspace(-1.5, 1.5, 7)
    truth = cme_oracle(spec, grid)
    pds = estimate_pds_lasso(dataset, grid, n_boot=0)
    linear = estimate_linear(dataset, grid, n_boot=0)
    pds_rmse = np.sqrt(np.mean((pds.estimate - truth) ** 2))
    linear_rmse = np.sqrt(np.mean((linear.estimate - truth) ** 2))
    assert pds_rmse < linear_rmse
    assert linear_rmse > 0.5


@pytest.mark.slow
def test_dml_with_estimated_nuisances_matches_the_true_nuisances():
    spec = get_dgp("fig3_binary")
    dataset = sample(spec, 5000, seed=13)
    x, z = dataset.moderator, dataset.covariates
    propensity = fig3_propensity(x, z)
    oracle = NuisanceFits.from_predictions(
        outcome_marginal=spec.response(0.0, x, z, spec.parameters) + propensity * (1 - x**2),
        treatment_marginal=propensity,
    )
    grid = np.array([-1.0, 0.0, 1.0])
    kernel = KernelSpec(bandwidth=0.5)
    known = estimate_dml_plm(dataset, oracle, grid, kernel, n_boot=0)
    fitted = estimate_dml_plm(dataset, fit_nuisances(dataset, seed=13), grid, kernel, n_boot=0)
    pooled = np.sqrt(known.std_error**2 + fitted.std_error**2)
    assert np.all(np.abs(known.estimate - fitted.estimate) < 3 * pooled)
    assert np.all(np.abs(known.estimate - cme_oracle(spec, grid)) < 4 * known.std_error)


@pytest.mark.slow
def test_dml_band_with_boosted_trees_on_the_binary_process():
    request = EstimationRequest(
        estimator="dml_plm",
        learner="boosted_trees",
        grid=(-1.0, 0.0, 1.0),
        bandwidth=0.5,
        n_boot=100,
    )
    report = run_mc(get_dgp("fig3_binary"), request, 3000, 40, seed=6)
    assert report.coverage_uniform >= 0.7
    assert np.all(np.abs(report.bias) < 0.25)
