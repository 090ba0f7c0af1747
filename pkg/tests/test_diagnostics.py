"""
Test the overlap diagnostic and the estimator recommendation.
"""
import json

import numpy as np

from cmelab.data import Dataset
from cmelab.diagnostics import overlap_diagnostic, recommend_estimator, rule_of_thumb_bandwidth
from cmelab.dgp import get_dgp, sample
from cmelab.kernel import KernelSpec
from cmelab.types import Estimator


def test_binary_overlap_has_both_arms():
    dataset = sample(get_dgp("fig3_binary"), 3000, seed=1)
    diagnostic = overlap_diagnostic(dataset, spec=KernelSpec(bandwidth=0.5))
    assert diagnostic.binary
    assert set(diagnostic.counts) == {"treated", "control"}
    interior = slice(5, 25)
    assert np.all(diagnostic.counts["treated"][interior] > 0)
    assert np.all(diagnostic.counts["control"][interior] > 0)
    total = diagnostic.counts["treated"].sum() + diagnostic.counts["control"].sum()
    assert total == dataset.n
    assert diagnostic.trim_threshold == 24.0
    assert diagnostic.bandwidth == 0.5
    assert not diagnostic.flagged[10:40].any()


def test_one_arm_flags_every_point():
    x = np.linspace(-1, 1, 200)
    dataset = Dataset.from_arrays(x, np.ones(200), x, treatment_binary=True)
    diagnostic = overlap_diagnostic(dataset, [-0.5, 0.0, 0.5])
    assert diagnostic.counts["control"].sum() == 0
    assert diagnostic.flagged.all()
    assert np.all(diagnostic.effective_n == 0)


def test_continuous_treatment_has_a_single_histogram(small_key_data):
    diagnostic = overlap_diagnostic(small_key_data, n_bins=12)
    assert not diagnostic.binary
    assert diagnostic.counts["all"].sum() == small_key_data.n
    assert diagnostic.bin_edges.shape == (13,)
    assert diagnostic.bandwidth == rule_of_thumb_bandwidth(small_key_data.moderator)
    frame = diagnostic.histogram_frame()
    assert list(frame.columns) == ["bin_lower", "bin_upper", "all"]
    assert len(frame) == 12


def test_overlap_json(tmp_path, small_key_data):
    diagnostic = overlap_diagnostic(small_key_data, [0.0], KernelSpec(bandwidth=0.01))
    diagnostic.to_json(tmp_path / "overlap.json")
    data = json.loads((tmp_path / "overlap.json").read_text(encoding="utf-8"))
    assert data["flagged"] == [True]
    assert data["trim_threshold"] == 16.0


def test_recommendations():
    small_binary = sample(get_dgp("fig3_binary"), 500, seed=1)
    assert recommend_estimator(small_binary).estimator is Estimator.AIPW_LASSO
    assert recommend_estimator(small_binary, experimental=True).estimator is Estimator.KERNEL

    large = sample(get_dgp("fig3_binary"), 6000, seed=1)
    assert recommend_estimator(large).estimator is Estimator.DML_PLM

    rng = np.random.default_rng(0)
    x, z = rng.standard_normal(300), rng.standard_normal((300, 2))
    continuous = Dataset.from_arrays(x, x + z[:, 0], x, z)
    assert recommend_estimator(continuous).estimator is Estimator.PDS_LASSO

    no_covariates = sample(get_dgp("key_a1"), 300, seed=1)
    recommendation = recommend_estimator(no_covariates)
    assert recommendation.estimator is Estimator.KERNEL
    assert "covariates" in recommendation.reason


def test_zero_one_treatment_is_not_assumed_binary():
    rng = np.random.default_rng(3)
    x, z = rng.uniform(-1, 1, 400), rng.standard_normal((400, 1))
    d = (rng.uniform(size=400) < 0.5).astype(float)
    undeclared = Dataset.from_arrays(x + d, d, x, z)
    diagnostic = overlap_diagnostic(undeclared, [0.0], KernelSpec(bandwidth=0.5))
    assert set(diagnostic.counts) == {"all"}
    assert recommend_estimator(undeclared).estimator is Estimator.PDS_LASSO

    declared = undeclared.declared_binary()
    diagnostic = overlap_diagnostic(declared, [0.0], KernelSpec(bandwidth=0.5))
    assert set(diagnostic.counts) == {"treated", "control"}
    assert recommend_estimator(declared).estimator is Estimator.AIPW_LASSO
