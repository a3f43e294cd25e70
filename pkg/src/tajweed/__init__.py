"""Recitation-rule recognition: filter-bank features, an RBF-kernel SVM
trained with SMO, and threshold-gated sliding-window detection."""

from .audio import AudioClip, load_wav, normalize_duration, resample, slide_windows
from .dataset import ManifestEntry, ReviewRecord, load_manifest, save_manifest, split
from .detection import (
    Detection,
    DetectionReport,
    RuleModel,
    calibrate_thresholds,
    detect,
    evaluate,
    predict_window,
)
from .features import (
    FeatureConfig,
    FeatureVector,
    FilterBank,
    Scaler,
    apply_scaler,
    build_filterbank,
    extract_features,
    fit_scaler,
)
from .persistence import load_model, save_model
from .svm import (
    KernelParams,
    SvmModel,
    TrainingProblem,
    decision_value,
    fit_calibration,
    grid_search,
    rbf_kernel,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "AudioClip", "load_wav", "resample", "normalize_duration", "slide_windows",
    "FeatureConfig", "FeatureVector", "FilterBank", "Scaler",
    "build_filterbank", "extract_features", "fit_scaler", "apply_scaler",
    "KernelParams", "TrainingProblem", "SvmModel",
    "rbf_kernel", "train", "decision_value", "fit_calibration", "grid_search",
    "RuleModel", "Detection", "DetectionReport",
    "predict_window", "detect", "calibrate_thresholds", "evaluate",
    "ManifestEntry", "ReviewRecord", "load_manifest", "save_manifest", "split",
    "save_model", "load_model",
]
