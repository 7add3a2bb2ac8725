"""Four-stage training orchestration, checkpoints, splits, and ablations."""

from .checkpoint import load_checkpoint, save_checkpoint
from .config import (
    RunConfig,
    apply_overrides,
    config_from_text,
    config_hash,
    config_to_text,
    desk_config,
)
from .splits import Splits, split_chronological
from .stages import (
    VARIANT_STAGES,
    ForecastSystem,
    configure_ablation,
    impute_split,
    run_pipeline,
)

__all__ = [
    "ForecastSystem",
    "RunConfig",
    "Splits",
    "VARIANT_STAGES",
    "apply_overrides",
    "config_from_text",
    "config_hash",
    "config_to_text",
    "configure_ablation",
    "desk_config",
    "impute_split",
    "load_checkpoint",
    "run_pipeline",
    "save_checkpoint",
    "split_chronological",
]
