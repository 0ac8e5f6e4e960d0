"""Speech-activity decoding from MEG-like recordings."""

from ._core import (
    ModelConfig,
    ModelParams,
    Recording,
    SynthConfig,
    acc_macro,
    apply_threshold,
    count_params,
    f1_macro,
    generate_session,
    init_params,
    load_checkpoint,
    load_events,
    load_recording,
    merge_overlaps,
    model_forward,
    mse_loss,
    normalize_temporal,
    preprocess_session,
    rasterize_labels,
    resample,
    resample_probs,
    save_checkpoint,
    save_events,
    save_recording,
    select_grad_channels,
    sweep_thresholds,
)

__all__ = [
    "ModelConfig",
    "ModelParams",
    "Recording",
    "SynthConfig",
    "acc_macro",
    "apply_threshold",
    "count_params",
    "f1_macro",
    "generate_session",
    "init_params",
    "load_checkpoint",
    "load_events",
    "load_recording",
    "merge_overlaps",
    "model_forward",
    "mse_loss",
    "normalize_temporal",
    "preprocess_session",
    "rasterize_labels",
    "resample",
    "resample_probs",
    "save_checkpoint",
    "save_events",
    "save_recording",
    "select_grad_channels",
    "sweep_thresholds",
]

__version__ = "0.1.0"
