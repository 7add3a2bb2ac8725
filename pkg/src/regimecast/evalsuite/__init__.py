"""Metrics, baselines, significance statistics, and report emission."""

from .baselines import attach_baselines, naive_baselines
from .metrics import (
    EvalReport,
    MetricRow,
    PredictionSet,
    compute_metrics,
    direction_sign,
    lower_median,
    persistence_prediction_set,
)
from .report import emit_report, regime_breakdown, render_text
from .significance import (
    SignificanceResult,
    daily_squared_errors,
    incomplete_beta,
    significance,
    student_t_two_sided_p,
)

__all__ = [
    "EvalReport",
    "MetricRow",
    "PredictionSet",
    "SignificanceResult",
    "attach_baselines",
    "compute_metrics",
    "daily_squared_errors",
    "direction_sign",
    "emit_report",
    "incomplete_beta",
    "lower_median",
    "naive_baselines",
    "persistence_prediction_set",
    "regime_breakdown",
    "render_text",
    "significance",
    "student_t_two_sided_p",
]
