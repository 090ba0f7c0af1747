"""
Conditional marginal effect estimation: linear, binning, kernel and debiased
estimators with uniform confidence bands, plus a simulation lab of processes
with known effects.
"""
from .bench import McReport, run_mc
from .data import CmeCurve, ColumnRoles, Dataset, EstimationRequest, ingest_csv, make_grid
from .debiased import (
    BasisExpansion,
    LearnerParams,
    NuisanceFits,
    estimate_aipw,
    estimate_dml_plm,
    estimate_pds_lasso,
    fit_nuisances,
)
from .dgp import DgpSpec, cape_oracle, cme_oracle, get_dgp, linear_plim_oracle, sample
from .diagnostics import OverlapDiagnostic, overlap_diagnostic, recommend_estimator
from .estimate import estimate
from .kernel import KernelSpec, estimate_kernel, local_linear_fit, select_bandwidth
from .linear import BinSpec, estimate_binning, estimate_linear, wald_constancy_test
from .types import DgpName, Estimator, Kernel, Learner, MissingPolicy
