"""
WAVECAL: Robust Ensemble-Based Calibration Toolkit
Multi-objective evolutionary tuning of wave-model physics under forcing uncertainty

DEFAULT CONFIGURATION
Every value here can be overridden per run by the JSON document given with
--config (see config/README.md for the key schema).
"""

# ============================================================================
# LOGGING CONFIGURATION
# ============================================================================
LOG_LEVEL = "INFO"
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
LOG_TO_FILE = False
LOG_DIR = "./logs"

# Run directories are created here when --out is not given
RUNS_DIR = "./runs"

# ============================================================================
# 1) PARAMETER SPACE
# ============================================================================
PARAMETER_NAMES = ("drg", "cfw", "stpm")

# Closed intervals [lo, hi]; the default configuration must lie strictly inside
BOUNDS = {
    "drg": (0.1, 2.0),        # wind-drag multiplier (written DRF in places)
    "cfw": (0.0005, 0.1),     # Collins bottom-friction coefficient
    "stpm": (0.0005, 0.01),   # whitecapping steepness
}

# Improvement baseline
DEFAULT_THETA = {"drg": 1.0, "cfw": 0.015, "stpm": 0.00302}

# Sample cfw/stpm strata in log space (off: the space is treated as linear)
LOG_SCALE_SAMPLING = False

# ============================================================================
# 2) SURROGATE WAVE MODEL (frozen constants)
# ============================================================================
GRAVITY = 9.81
WIND_MEMORY_LAMBDA = 0.6          # weight of the current step in the wind memory
FETCH_COEFFICIENT = 0.21          # H0 = 0.21 * drg * W_eff^2 / g
DEPTH_CAP_RATIO = 0.5             # H <= 0.5 * depth
STEEPNESS_REFERENCE = 0.00302
STEEPNESS_EXPONENT = 0.25
FRICTION_SCALE = 40.0
FRICTION_MIN_DEPTH = 2.0
WET_DEPTH_MIN = 0.0               # cells with depth <= this are land

# ============================================================================
# 3) EXTERNAL MODEL ADAPTER
# ============================================================================
# Placeholders: {drg} {cfw} {stpm} {wind_path} {out_path}
EXTERNAL_COMMAND = None
EXTERNAL_TIMEOUT_S = 600.0

# ============================================================================
# 4) FORCING NOISE ENSEMBLE
# ============================================================================
ENSEMBLE_MEMBERS = 10
NOISE_SIGMA = 0.25                # relative to the mean component magnitude
NOISE_SOURCE_SPACING = 10         # one jittered source per spacing x spacing block

# Calm-period suppression, applied to member model output
APPLY_CALM_SUPPRESSION = True
CALM_THRESHOLD = 0.5              # m of base Hs
CALM_OVERSHOOT = 0.1              # member may exceed base by 10% in calm steps

# ============================================================================
# 5) EVOLUTION (SPEA2)
# ============================================================================
POPULATION_SIZE = 20
GENERATIONS = 60
ARCHIVE_SIZE = 5
CROSSOVER_RATE = 0.2
MUTATION_RATE = 0.2
MUTATION_SCALE = 0.1              # mutation SD as a fraction of (hi - lo)
EARLY_STOP = False
STAGNATION_GENERATIONS = 15

# ============================================================================
# 6) ROBUST FITNESS (REBEC)
# ============================================================================
ENS_AMOUNT = None                 # None -> ceil(members / 2)
AGGREGATOR = "mean"               # "mean" | "mean_variance"
VARIANCE_WEIGHT = 1.0

# ============================================================================
# 7) METRICS
# ============================================================================
PEAK_QUANTILE = 0.75

# ============================================================================
# 8) EXPERIMENT PROTOCOL
# ============================================================================
REPEATS = 20                      # reference protocol used 100
MASTER_SEED = 2014
MAX_FAILURE_FRACTION = 0.2
MID_SUBSET_SIZES = (4, 5)
MID_SCENARIOS = 5
LARGE_SCENARIOS = 4
LARGE_SUBSET_SIZE = None          # None -> all stations but one
JOBS = 1

# Synthetic truth: the generating configuration for observations
TRUTH_THETA = {"drg": 1.3, "cfw": 0.03, "stpm": 0.0045}
OBSERVATION_NOISE_SD = 0.0

# ============================================================================
# 9) SENSITIVITY ANALYSIS
# ============================================================================
SENSITIVITY_RUNS = 50
SENSITIVITY_RELATIVE_SD = 0.25

# ============================================================================
# 10) SYNTHETIC REFERENCE DOMAIN
# ============================================================================
DOMAIN_NX = 30
DOMAIN_NY = 30
DOMAIN_MIN_DEPTH = 3.0
DOMAIN_MAX_DEPTH = 60.0
DOMAIN_START = "2014-08-14T12:00:00"
DOMAIN_STEP_HOURS = 3
DOMAIN_DAYS = 31
CALM_WIND_SPEED = 4.0             # m/s background
STORM_PEAK_SPEED = 18.0           # m/s
