from enum import Enum


class Estimator(Enum):
    """The estimator used to trace the conditional marginal effect across the
    moderator.

    Props:
        LINEAR (str):     The classical linear interaction model. Its marginal
                          effect is a straight line in the moderator.
        BINNING (str):    Piecewise-linear fit with one treatment slope per
                          quantile bin of the moderator, evaluated at the
                          within-bin medians.
        KERNEL (str):     Local-linear kernel regression at every grid point.
        AIPW_LASSO (str): Doubly robust pseudo-outcomes smoothed over the
                          moderator. Binary treatments only.
        PDS_LASSO (str):  Post-double-selection on the fully interacted model.
        DML_PLM (str):    Cross-fitted residual-on-residual local regression
                          under the partially linear model.
    """

    LINEAR = "linear"
    BINNING = "binning"
    KERNEL = "kernel"
    AIPW_LASSO = "aipw_lasso"
    PDS_LASSO = "pds_lasso"
    DML_PLM = "dml_plm"


class Kernel(Enum):
    """The kernel weighting observations around an evaluation point. Weights
    are scaled so that an observation sitting on the evaluation point gets
    weight 1, which makes their sum read as an effective sample size.

    Props:
        EPANECHNIKOV (str): (1 - u^2) on |u| < 1. Compact support.
        UNIFORM (str):      1 on |u| <= 1. The closed interval lets a
                            bandwidth equal to the moderator's range weight
                            every observation equally.
        GAUSSIAN (str):     exp(-u^2 / 2). Every observation gets some weight.
    """

    EPANECHNIKOV = "epanechnikov"
    UNIFORM = "uniform"
    GAUSSIAN = "gaussian"


class Learner(Enum):
    """The learner used for the nuisance functions of the debiased estimators.

    Props:
        LASSO_BASIS (str):   LASSO (and ridge-logistic for the propensity)
                             on a cubic basis expansion with pairwise
                             products.
        BOOSTED_TREES (str): Gradient-boosted regression trees of depth 3.
    """

    LASSO_BASIS = "lasso_basis"
    BOOSTED_TREES = "boosted_trees"


class MissingPolicy(Enum):
    """What ingestion does with a row holding a missing or non-finite value.

    Props:
        REJECT (str):    Fail, naming the offending column.
        DROP_ROWS (str): Drop the row and record how many were dropped.
    """

    REJECT = "reject"
    DROP_ROWS = "drop_rows"


class DgpName(Enum):
    """The data-generating processes of the simulation lab.

    Props:
        KEY_A1 (str):          Y = D^2 - 0.5 D + e with (D, X) bivariate
                               normal, correlation 0.5.
        FIG3_BINARY (str):     Binary treatment with a logistic propensity and
                               two nonlinear covariates.
        FIG4_CONTINUOUS (str): Continuous treatment where the conditional
                               marginal effect and the conditional average
                               partial effects visibly disagree.
        LINEAR_NULL (str):     Constant effect, for test-size checks.
        CUSTOM (str):          The key process with user-set moderator shift,
                               scale and correlation. It has no oracle.
    """

    KEY_A1 = "key_a1"
    FIG3_BINARY = "fig3_binary"
    FIG4_CONTINUOUS = "fig4_continuous"
    LINEAR_NULL = "linear_null"
    CUSTOM = "custom"


class Stream(Enum):
    """Random stream domains. Two consumers seeded with the same integer never
    share draws as long as they use different domains.
    """

    SAMPLE = 0
    BOOTSTRAP = 1
    FOLDS = 2
    REPLICATION = 3
    NORMAL_DRAWS = 4
    MODEL = 5
