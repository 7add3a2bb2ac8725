"""Forecast metrics: MAPE, RMSE, DA, Theil's U, and CTR.

MAPE is computed in price units (percent of actual price); RMSE in
normalized units; Theil's U against the same-horizon persistence forecast.
CTR confidence is the inverse sample variance of the two pathway outputs,
with pooled lower-medians splitting confidence and absolute error.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

CTR_EPS = 1e-8


def lower_median(values: np.ndarray) -> float:
    """Median with the lower-median convention for even counts."""
    ordered = np.sort(np.asarray(values, dtype=np.float64))
    if ordered.size == 0:
        raise ValueError("median of an empty set")
    return float(ordered[(ordered.size - 1) // 2])


def direction_sign(reference: np.ndarray, value: np.ndarray) -> np.ndarray:
    return np.sign(np.asarray(value) - np.asarray(reference))


@dataclass
class PredictionSet:
    """Aligned prediction/target arrays for one evaluation split."""

    days: np.ndarray                  # (D,) panel day indices
    tickers: list[str]
    horizons: tuple
    y_price: np.ndarray               # (D, N, H) blended, price units
    target_price: np.ndarray          # (D, N, H)
    y_norm: np.ndarray                # (D, N, H) blended, normalized units
    target_norm: np.ndarray
    y_normal_norm: np.ndarray         # per-pathway outputs, normalized
    y_event_norm: np.ndarray
    prior_close: np.ndarray           # (D, N) price at prediction time
    prior_norm: np.ndarray            # (D, N) normalized close at prediction time
    valid: np.ndarray                 # (D, N, H) bool


@dataclass
class MetricRow:
    label: str
    horizon: int
    mape: float
    rmse: float
    da: float
    theil_u: float
    ctr: float
    n: int
    n_excluded: int = 0


@dataclass
class EvalReport:
    rows: list = field(default_factory=list)          # per (stock, horizon)
    aggregates: list = field(default_factory=list)    # means across stocks
    baselines: list = field(default_factory=list)
    regime_rows: list = field(default_factory=list)
    significance: list = field(default_factory=list)
    trajectory: list = field(default_factory=list)    # (date, tau, alpha, mean_err)
    meta: dict = field(default_factory=dict)


def _mape(pred, target):
    usable = target != 0.0
    excluded = int(np.size(target) - usable.sum())
    if not usable.any():
        return float("nan"), excluded
    value = 100.0 * np.mean(np.abs((target[usable] - pred[usable]) / target[usable]))
    return float(value), excluded


def _theil_u(pred, target, prior):
    denom = np.sqrt(np.sum((target - prior) ** 2))
    num = np.sqrt(np.sum((target - pred) ** 2))
    if denom == 0.0:
        return float("nan")
    return float(num / denom)


def _metric_block(label, h_idx, horizon, mask, pred_price, target_price,
                  pred_norm, target_norm, prior_price, agreement):
    pp = pred_price[mask]
    tp = target_price[mask]
    pn = pred_norm[mask]
    tn = target_norm[mask]
    prior = prior_price[mask]
    mape, excluded = _mape(pp, tp)
    rmse = float(np.sqrt(np.mean((pn - tn) ** 2)))
    da = 100.0 * float(np.mean(direction_sign(prior, pp)
                               == direction_sign(prior, tp)))
    theil = _theil_u(pp, tp, prior)
    ctr = 100.0 * float(np.mean(agreement[mask]))
    return MetricRow(label=label, horizon=horizon, mape=mape, rmse=rmse,
                     da=da, theil_u=theil, ctr=ctr, n=int(mask.sum()),
                     n_excluded=excluded)


def ctr_agreement(conf: np.ndarray, abs_err: np.ndarray,
                  valid: np.ndarray) -> np.ndarray:
    """Pooled-median confidence/accuracy agreement indicator per sample."""
    c_med = lower_median(conf[valid])
    e_med = lower_median(abs_err[valid])
    return ((conf > c_med) == (abs_err < e_med)).astype(np.float64)


def compute_metrics(pred: PredictionSet) -> EvalReport:
    report = EvalReport()
    n_stocks = len(pred.tickers)
    prior_price_3d = np.repeat(pred.prior_close[:, :, None],
                               len(pred.horizons), axis=2)
    conf = 1.0 / (CTR_EPS + 0.5 * (pred.y_normal_norm - pred.y_event_norm) ** 2)
    abs_err = np.abs(pred.y_norm - pred.target_norm)

    for h_idx, horizon in enumerate(pred.horizons):
        valid_h = pred.valid[:, :, h_idx]
        agreement = ctr_agreement(conf[:, :, h_idx], abs_err[:, :, h_idx], valid_h)
        per_stock = []
        for s, ticker in enumerate(pred.tickers):
            mask = valid_h[:, s]
            if not mask.any():
                continue
            row = _metric_block(
                ticker, h_idx, horizon, mask,
                pred.y_price[:, s, h_idx], pred.target_price[:, s, h_idx],
                pred.y_norm[:, s, h_idx], pred.target_norm[:, s, h_idx],
                pred.prior_close[:, s], agreement[:, s])
            per_stock.append(row)
            report.rows.append(row)
        if per_stock:
            report.aggregates.append(MetricRow(
                label="MEAN", horizon=horizon,
                mape=float(np.mean([r.mape for r in per_stock])),
                rmse=float(np.mean([r.rmse for r in per_stock])),
                da=float(np.mean([r.da for r in per_stock])),
                theil_u=float(np.mean([r.theil_u for r in per_stock])),
                ctr=float(np.mean([r.ctr for r in per_stock])),
                n=int(np.sum([r.n for r in per_stock])),
                n_excluded=int(np.sum([r.n_excluded for r in per_stock]))))
    report.meta["n_stocks"] = n_stocks
    report.meta["mape_units"] = "price"
    report.meta["rmse_units"] = "normalized"
    return report


def persistence_prediction_set(pred: PredictionSet) -> PredictionSet:
    """The same targets forecast by the random-walk persistence predictor."""
    d, n, h = pred.target_price.shape
    prior3 = np.repeat(pred.prior_close[:, :, None], h, axis=2)
    prior3n = np.repeat(pred.prior_norm[:, :, None], h, axis=2)
    return PredictionSet(
        days=pred.days, tickers=pred.tickers, horizons=pred.horizons,
        y_price=prior3.copy(), target_price=pred.target_price,
        y_norm=prior3n.copy(), target_norm=pred.target_norm,
        y_normal_norm=prior3n.copy(), y_event_norm=prior3n.copy(),
        prior_close=pred.prior_close, prior_norm=pred.prior_norm,
        valid=pred.valid)
