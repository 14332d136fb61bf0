ARCHITECTURES = ("FCNN", "CNN", "LSTM")
"""tuple: The forecaster architectures trained for every urban zone, in the
order their epoch counts are listed in :data:`DEFAULT_EPOCHS`.
"""

DEFAULT_INPUT_WINDOW = 60
"""int: Number of observed days fed to a forecaster (``w_i``)."""

DEFAULT_OUTPUT_WINDOW = 30
"""int: Number of days predicted at once by a forecaster (``w_o``). Must be
smaller than :data:`DEFAULT_INPUT_WINDOW`.
"""

DEFAULT_SPLIT_FRACTION = 0.8
"""float: Chronological fraction of baseline window pairs used for gradient
updates; the remaining pairs validate.
"""

DEFAULT_BATCH_SIZE = 64

DEFAULT_EPOCHS = {
    "FCNN": 70,
    "CNN": 90,
    "LSTM": 25,
}
"""dict: Fixed number of training epochs per architecture. The values were
chosen where the validation loss approximately plateaus, so no early stopping
is applied.
"""

DEFAULT_ENSEMBLE_WEIGHTS = {
    "LSTM": 0.5,
    "FCNN": 0.3,
    "CNN": 0.2,
}
"""dict: Ensemble weights ``c_m``. LSTM forecasts are the most stable across
change and no-change steps, CNN forecasts the least stable around change
points, hence the smallest weight.
"""

DEFAULT_THRESHOLD_PERCENT = 25.0
"""float: ``T``, the percentage of steps with the largest squared residual
that are flagged as change points."""

THRESHOLD_MODE_BATCH = "batch"
THRESHOLD_MODE_STREAMING = "streaming"
THRESHOLD_MODES = (THRESHOLD_MODE_BATCH, THRESHOLD_MODE_STREAMING)
DEFAULT_THRESHOLD_MODE = THRESHOLD_MODE_BATCH

THRESHOLD_SCOPE_ALL = "all"
THRESHOLD_SCOPE_TEST = "test"
THRESHOLD_SCOPES = (THRESHOLD_SCOPE_ALL, THRESHOLD_SCOPE_TEST)
DEFAULT_THRESHOLD_SCOPE = THRESHOLD_SCOPE_TEST
"""str: Which residuals the threshold is computed from. ``"test"`` uses the
monitored span after the training end date, ``"all"`` every forecast-covered
step of the zone including the in-sample training residuals.
"""

DEFAULT_STREAMING_WINDOW_DAYS = 365
"""int: Length of the trailing residual window the streaming threshold is
computed over."""

DEFAULT_MIN_PERSISTENCE_DAYS = 7
"""int: Flagged runs spanning fewer days than this are transient disturbances
and do not form a change segment."""

DEFAULT_GAP_TOLERANCE_DAYS = 3
"""int: Unflagged days tolerated inside one change segment."""

DEFAULT_SMOOTHING_WINDOW_DAYS = 30
"""int: Trailing rolling-mean window applied to the daily zone series."""

DEFAULT_RECOVERY_BAND = 0.10
"""float: Relative deviation from the baseline median under which a step
counts as "no change". Used for full recovery labels and false positives."""

DEFAULT_F_BETA = 2.0

DEFAULT_YEARLY_BUFFER = 1
"""int: Years of tolerance around urbanization ground truth."""

MIN_RECOMMENDED_TRAINING_DAYS = 3 * 365
"""int: Baseline spans shorter than this are accepted with a warning."""

DEFAULT_DROPOUT_RATE = 0.1

DEFAULT_MAX_NORM = 3.0
"""float: Max-norm cap applied to each unit's incoming kernel weights after
every optimizer step. ``None`` disables the constraint."""

DEFAULT_ACTIVITY_L2 = 1e-6
"""float: L2 activity regularization coefficient of hidden dense layers.
``0`` disables it."""

ADAM_STEP_SIZE = 0.001
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPSILON = 1e-8

BATCHNORM_MOMENTUM = 0.99
BATCHNORM_EPSILON = 1e-3

CNN_FILTERS = (90, 45, 30, 20)
CNN_KERNELS = (9, 9, 6, 6)
CNN_POOLED_BLOCKS = 2
"""int: Only the first convolution blocks are followed by max pooling, so a
60-day input keeps a non-empty feature map through all four blocks."""

CNN_POOL_SIZE = 2
CNN_DENSE_UNITS = (20, 15)
FCNN_HIDDEN_UNITS = (60, 45, 25)
LSTM_UNITS = (45, 30)
LSTM_DENSE_UNITS = (30, 15)

# {{{ DO NOT change these, files written by older versions depend on them

CHECKPOINT_FORMAT = "ntlchange-checkpoint/1"
REPORT_FORMAT = "ntlchange-report/1"
EVAL_FORMAT = "ntlchange-eval/1"
RUN_CONFIG_VERSION = 1

# }}}
