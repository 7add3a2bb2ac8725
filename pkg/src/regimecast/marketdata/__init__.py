"""OHLCV ingestion, technical indicators, router features, normalization."""

from .indicators import (
    CLOSE_INDEX,
    FEATURE_NAMES,
    ROUTER_NAMES,
    WARMUP_DAYS,
    FeaturePanel,
    build_router_features,
    compute_indicators,
)
from .normalize import ExpandingNormalizer, expanding_normalize, normalize_panel
from .panel import OhlcvPanel, impute, load_ohlcv_csv

__all__ = [
    "CLOSE_INDEX",
    "FEATURE_NAMES",
    "ROUTER_NAMES",
    "WARMUP_DAYS",
    "ExpandingNormalizer",
    "FeaturePanel",
    "OhlcvPanel",
    "build_router_features",
    "compute_indicators",
    "expanding_normalize",
    "impute",
    "load_ohlcv_csv",
    "normalize_panel",
]
