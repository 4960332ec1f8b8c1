"""soclab: a desk-scale dependability lab for AI-based battery SOC estimation.

Pieces: a synthetic discharge simulator with coulomb-counting ground truth,
an LSTM state-of-charge estimator trained from scratch, a bit-level stuck-at
fault injector for the float64 sensor streams, a safety-cage monitor with
the classic sensor failure-mode detectors, and a campaign runner that sweeps
faults and reports RMSE / absolute-deviation impact.
"""

__version__ = "0.1.0"

from .battery import (
    BatteryConfig,
    CoulombCounter,
    DischargeTrace,
    OcvCurve,
    SensorSample,
    coulomb_count,
    load_trace_csv,
    save_trace_csv,
    simulate_discharge,
    synthesize_cycle,
)
from .campaign import (
    BaselineResult,
    CampaignResult,
    EmptyCampaignError,
    ExperimentResult,
    MonitorSummary,
    build_default_dataset,
    emit_reports,
    load_absdev_csv,
    load_campaign_csv,
    run_baseline,
    run_campaign,
    run_experiment,
    run_monitored,
    train_default_model,
)
from .dataset import (
    DegenerateChannelError,
    InputWindow,
    NormalizationBounds,
    TraceTooShortError,
    denormalize,
    fit_bounds,
    make_windows,
    normalize,
    normalize_trace,
    window_targets,
    windows_from_frames,
)
from .faults import (
    Channel,
    CorruptedSeries,
    FaultMode,
    FaultSpec,
    bit_region,
    bits_to_float,
    corrupt_series,
    enumerate_campaign,
    float_to_bits,
    inject_bit,
    inject_series,
    read_bit,
    uniform_one_bits,
)
from .lstm import (
    BadFormatError,
    LstmModel,
    Prediction,
    ShapeMismatchError,
    TrainConfig,
    TrainingDivergedError,
    evaluate_mse,
    forward,
    gradient_check,
    init_model,
    load_model,
    predict_windows,
    save_model,
    train,
)
from .metrics import DeviationReport, ScheduleMismatchError, compare_runs, rmse
from .monitor import (
    FailureMode,
    MonitorConfig,
    MonitorVerdict,
    SafetyMonitor,
    Source,
    Status,
    arbitrate,
    check_oscillation,
    check_range,
    check_rationality,
    check_stuck,
)
