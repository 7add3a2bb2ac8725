"""Naive baselines: random-walk persistence and long-only direction calls."""

from __future__ import annotations

import numpy as np

from .metrics import (
    EvalReport,
    MetricRow,
    PredictionSet,
    compute_metrics,
    direction_sign,
    persistence_prediction_set,
)


def persistence_rows(pred: PredictionSet) -> list:
    """Metric rows for the persistence predictor (Theil's U is 1 exactly)."""
    report = compute_metrics(persistence_prediction_set(pred))
    rows = []
    for row in report.aggregates:
        rows.append(MetricRow(label="persistence", horizon=row.horizon,
                              mape=row.mape, rmse=row.rmse, da=row.da,
                              theil_u=row.theil_u, ctr=float("nan"), n=row.n,
                              n_excluded=row.n_excluded))
    return rows


def long_only_rows(pred: PredictionSet) -> list:
    """DA of predicting 'up' every day, per horizon (mean across stocks)."""
    rows = []
    for h_idx, horizon in enumerate(pred.horizons):
        per_stock = []
        for s in range(len(pred.tickers)):
            mask = pred.valid[:, s, h_idx]
            if not mask.any():
                continue
            up = direction_sign(pred.prior_close[mask, s],
                                pred.target_price[mask, s, h_idx]) > 0
            per_stock.append(100.0 * float(np.mean(up)))
        rows.append(MetricRow(label="long-only", horizon=horizon,
                              mape=float("nan"), rmse=float("nan"),
                              da=float(np.mean(per_stock)),
                              theil_u=float("nan"), ctr=float("nan"),
                              n=int(pred.valid[:, :, h_idx].sum())))
    return rows


def naive_baselines(pred: PredictionSet) -> list:
    if pred.valid.sum() == 0:
        raise ValueError("baselines need a non-empty evaluation split")
    return persistence_rows(pred) + long_only_rows(pred)


def attach_baselines(report: EvalReport, pred: PredictionSet) -> EvalReport:
    report.baselines = naive_baselines(pred)
    return report
