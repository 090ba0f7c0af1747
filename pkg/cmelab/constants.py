"""
Defaults shared across the package. Every value here can be overridden through
the function arguments or the run configuration.
"""

# Evaluation grid: equally spaced over the [1%, 99%] quantile range of X.
DEFAULT_GRID_SIZE = 50
GRID_QUANTILES = (1.0, 99.0)

DEFAULT_N_BINS = 3
DEFAULT_N_BOOT = 1000
DEFAULT_CONFIDENCE_LEVEL = 0.95
DEFAULT_SEED = 0

# A grid point is trimmed when its kernel effective sample size falls below
# TRIM_MULTIPLIER times the number of local regressors.
TRIM_MULTIPLIER = 4

# Bootstrap bands need at least this many successful replicates.
MIN_BOOTSTRAP_SUCCESSES = 50

# Bandwidth candidates: log-spaced multiples of sd(X).
BANDWIDTH_GRID_SIZE = 20
BANDWIDTH_GRID_RANGE = (0.05, 2.0)
DEFAULT_CV_FOLDS = 5
# Bandwidth CV: held-out points per vectorised block, and the smallest
# eigenvalue ratio of a scaled local Gram matrix solved without refitting.
CV_BLOCK_SIZE = 256
CV_CONDITION_FLOOR = 1e-10

# Binning: minimum observations per bin is max(MIN_BIN_COUNT, p + 4).
MIN_BIN_COUNT = 10

# Numerics.
WLS_RANK_TOLERANCE = 1e-10
IRLS_MAX_ITER = 100
IRLS_TOLERANCE = 1e-8
LASSO_TOLERANCE = 1e-8
LASSO_MAX_SWEEPS = 10000
LASSO_PATH_SIZE = 50
LASSO_PATH_RATIO = 1e-3
PLUGIN_LAMBDA_C = 1.1
PLUGIN_LAMBDA_GAMMA = 0.05

# Debiased estimators.
DEFAULT_K_FOLDS = 5
PROPENSITY_BOUNDS = (0.01, 0.99)
CLIP_WARNING_RATE = 0.10
CLIP_FAILURE_RATE = 0.50
BASIS_DEGREE = 3
DEFAULT_RIDGE = 1.0
TREES_ROUNDS = 200
TREES_DEPTH = 3
TREES_LEARNING_RATE = 0.1
TREES_VALIDATION_FRACTION = 0.2
TREES_PATIENCE = 10

# Monte Carlo.
MAX_FAILURE_RATE = 0.20
TEST_LEVEL = 0.05

# Diagnostics.
HISTOGRAM_BINS = 30

# Sampling chunk size; chunk c draws from stream c.
SAMPLE_CHUNK = 65536

THREADS_ENV_VAR = "CMELAB_THREADS"
