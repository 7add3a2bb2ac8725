"""Look-ahead-safe expanding z-score normalization.

Train mode standardizes at time t with cumulative mean/std over valid
observations through t (population std).  Eval mode applies statistics
frozen at the full training-period values.  Features whose training std
collapses below 1e-8 are emitted as 0 and flagged constant.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from ..errors import ConfigError, WarmupError
from .indicators import FeaturePanel

STD_FLOOR = 1e-8


def _align_valid(values: np.ndarray, valid: np.ndarray) -> np.ndarray:
    if valid.ndim == values.ndim - 1:
        return valid[..., None]
    return valid


def _expanding_stats(values: np.ndarray, valid: np.ndarray):
    """Cumulative mean/std over valid rows; column-wise, prefix-exact."""
    valid = _align_valid(values, valid)
    x = np.where(valid, values, 0.0)
    n = np.cumsum(valid, axis=0).astype(np.float64)
    sx = np.cumsum(x, axis=0)
    sxx = np.cumsum(x * x, axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = sx / n
        var = np.maximum(sxx / n - mean * mean, 0.0)
    return n, mean, np.sqrt(var)


def expanding_normalize(values: np.ndarray, valid: np.ndarray):
    """Causal normalization of (n_days, ...) values.

    Returns (normalized, out_valid): rows with fewer than 2 prior valid
    observations stay invalid; constant features normalize to 0.
    """
    valid_b = _align_valid(values, valid)
    n, mean, std = _expanding_stats(values, valid)
    enough = valid_b & (n >= 2)
    safe_std = np.where(std < STD_FLOOR, 1.0, std)
    normalized = np.where(enough, (values - mean) / safe_std, 0.0)
    normalized = np.where(enough & (std < STD_FLOOR), 0.0, normalized)
    out_valid = enough.all(axis=-1) if valid_b is not valid else enough
    return normalized, out_valid


def frozen_stats(values: np.ndarray, valid: np.ndarray):
    """Final training-period mean/std (population) per column."""
    if not np.any(valid):
        raise WarmupError("no valid training rows to freeze statistics")
    n, mean, std = _expanding_stats(values, valid)
    return mean[-1], std[-1], n[-1]


class ExpandingNormalizer(BaseEstimator):
    """Per-stock feature and router normalizer with frozen eval statistics.

    fit() freezes training-period statistics; transform() applies them
    (eval mode); expanding_transform() is the causal train-mode path.
    """

    def __init__(self, std_floor: float = STD_FLOOR):
        self.std_floor = std_floor

    def fit(self, features: np.ndarray, valid: np.ndarray):
        self.mean_, self.std_, self.count_ = frozen_stats(features, valid)
        self.constant_ = self.std_ < self.std_floor
        self.meta_ = {"std_definition": "population", "mode": "expanding-train"}
        return self

    def transform(self, features: np.ndarray, valid: np.ndarray):
        if not hasattr(self, "mean_"):
            raise ConfigError("eval-mode normalization requires frozen stats; fit first")
        valid_b = _align_valid(features, valid)
        safe = np.where(self.constant_, 1.0, self.std_)
        normalized = np.where(valid_b, (features - self.mean_) / safe, 0.0)
        normalized = np.where(valid_b & self.constant_, 0.0, normalized)
        return normalized, valid.copy()

    def expanding_transform(self, features: np.ndarray, valid: np.ndarray):
        return expanding_normalize(features, valid)


def normalize_panel(panel: FeaturePanel, train_end: int) -> FeaturePanel:
    """Attach normalized features/router to `panel`.

    Rows < train_end use expanding statistics; rows >= train_end use
    statistics frozen over [0, train_end).  Stores the frozen stats and
    constant flags in panel.stats.
    """
    if not 0 < train_end <= panel.n_days:
        raise ConfigError(f"train_end {train_end} outside panel of {panel.n_days} days")
    feat_scaler = ExpandingNormalizer().fit(
        panel.features[:train_end], panel.valid[:train_end])
    router_scaler = ExpandingNormalizer().fit(
        panel.router[:train_end],
        np.broadcast_to(panel.router_valid[:train_end, None],
                        panel.router[:train_end].shape))

    normalized = np.zeros_like(panel.features)
    norm_valid = np.zeros_like(panel.valid)
    normalized[:train_end], norm_valid[:train_end] = feat_scaler.expanding_transform(
        panel.features[:train_end], panel.valid[:train_end])
    normalized[train_end:], norm_valid[train_end:] = feat_scaler.transform(
        panel.features[train_end:], panel.valid[train_end:])

    router_valid_2d = np.broadcast_to(panel.router_valid[:, None], panel.router.shape)
    router_norm = np.zeros_like(panel.router)
    router_row_valid = np.zeros_like(panel.router_valid)
    head, head_valid = router_scaler.expanding_transform(
        panel.router[:train_end], router_valid_2d[:train_end])
    tail, tail_valid = router_scaler.transform(
        panel.router[train_end:], router_valid_2d[train_end:])
    router_norm[:train_end], router_norm[train_end:] = head, tail
    router_row_valid[:train_end] = head_valid.all(axis=1)
    router_row_valid[train_end:] = tail_valid.all(axis=1)

    # per-day close statistics: targets are normalized (and predictions
    # de-normalized) with the stats in effect at prediction time
    from .indicators import CLOSE_INDEX
    close = panel.features[:, :, CLOSE_INDEX]
    _, c_mean, c_std = _expanding_stats(close[:train_end], panel.valid[:train_end])
    close_mean = np.empty_like(close)
    close_std = np.empty_like(close)
    close_mean[:train_end], close_std[:train_end] = c_mean, c_std
    close_mean[train_end:] = feat_scaler.mean_[:, CLOSE_INDEX]
    close_std[train_end:] = feat_scaler.std_[:, CLOSE_INDEX]
    close_std = np.where(close_std < STD_FLOOR, 1.0, close_std)

    panel.normalized = normalized
    panel.router_normalized = router_norm
    panel.valid = norm_valid
    panel.router_valid = router_row_valid
    panel.stats = {
        "train_end": train_end,
        "feature_mean": feat_scaler.mean_, "feature_std": feat_scaler.std_,
        "feature_constant": feat_scaler.constant_,
        "router_mean": router_scaler.mean_, "router_std": router_scaler.std_,
        "router_constant": router_scaler.constant_,
        "close_mean_by_day": close_mean, "close_std_by_day": close_std,
        "meta": feat_scaler.meta_,
    }
    return panel
