"""featprobe: layer-wise feature probing and health diagnostics.

Measures how much task-relevant classification signal survives at each
layer of a vision-tower -> connector -> language-model pipeline by
training small probes on dumped features, scoring every module's curve
with a feature health score, and tagging recurring failure patterns.
"""

from .diagnose import (
    DiagnoseThresholds,
    FailureModeReport,
    GapReport,
    ShapeTag,
    classify_curve_shape,
    comprehension_utilization_gap,
    detect_failure_modes,
)
from .health import (
    FhsConfig,
    FhsProfile,
    ModuleCurve,
    ModuleHealth,
    feature_health_score,
    four_score_profile,
    growth_factor,
    render_profile_percent,
    volatility_penalty,
)
from .metrics import AucScores, PredictionBatch, PrfScores, accuracy, auc, prf1
from .probe import (
    LayerProbeResult,
    MetricSet,
    ProbeConfig,
    SweepResult,
    TrainedProbe,
    adamw_step,
    cosine_warmup_lr,
    evaluate_probe,
    probe_site_sweep,
    train_probe,
)
from .tensor_store import (
    FeatureTensor,
    RunManifest,
    SiteDescriptor,
    TensorFormatError,
    TensorValidationError,
    ValidationReport,
    load_manifest,
    read_ftd,
    save_manifest,
    validate_manifest,
    write_ftd,
)

__version__ = "0.1.0"

__all__ = [
    "AucScores",
    "DiagnoseThresholds",
    "FailureModeReport",
    "FeatureTensor",
    "FhsConfig",
    "FhsProfile",
    "GapReport",
    "LayerProbeResult",
    "MetricSet",
    "ModuleCurve",
    "ModuleHealth",
    "PredictionBatch",
    "PrfScores",
    "ProbeConfig",
    "RunManifest",
    "ShapeTag",
    "SiteDescriptor",
    "SweepResult",
    "TensorFormatError",
    "TensorValidationError",
    "TrainedProbe",
    "ValidationReport",
    "accuracy",
    "adamw_step",
    "auc",
    "classify_curve_shape",
    "comprehension_utilization_gap",
    "cosine_warmup_lr",
    "detect_failure_modes",
    "evaluate_probe",
    "feature_health_score",
    "four_score_profile",
    "growth_factor",
    "load_manifest",
    "prf1",
    "probe_site_sweep",
    "read_ftd",
    "render_profile_percent",
    "save_manifest",
    "train_probe",
    "validate_manifest",
    "volatility_penalty",
    "write_ftd",
]
