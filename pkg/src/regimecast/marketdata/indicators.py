"""Technical indicators, router features, and the FeaturePanel container.

The per-stock prediction vector has 17 entries: OHLCV, SMA/EMA at 5/10/20,
RSI-14 (Wilder smoothing), MACD(12,26,9) line and histogram, daily return,
log return, and 20-day rolling volatility of log returns.  The market-level
router vector has 6 entries.  Rows inside warm-up windows are masked invalid,
never silently zeroed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DataError
from .panel import OhlcvPanel

FEATURE_NAMES = (
    "open", "high", "low", "close", "volume",
    "sma_5", "sma_10", "sma_20",
    "ema_5", "ema_10", "ema_20",
    "rsi_14", "macd_line", "macd_hist",
    "daily_return", "log_return", "volatility_20",
)
ROUTER_NAMES = ("vol_5", "vol_20", "vix_change", "corr_change",
                "sentiment_abs", "post_velocity")
CLOSE_INDEX = FEATURE_NAMES.index("close")

# MACD slow EMA (26) plus signal EMA (9) minus 2: first rows that any
# indicator needs before its value is trustworthy.
WARMUP_DAYS = 26 + 9 - 2
CORRELATION_WINDOW = 20


@dataclass
class FeaturePanel:
    tickers: list[str]
    dates: list[str]
    features: np.ndarray            # (n_days, n_stocks, 17)
    valid: np.ndarray               # bool (n_days, n_stocks)
    router: np.ndarray              # (n_days, 6)
    router_valid: np.ndarray        # bool (n_days,)
    feature_names: tuple = FEATURE_NAMES
    router_names: tuple = ROUTER_NAMES
    # filled by expanding normalization
    normalized: np.ndarray | None = None
    router_normalized: np.ndarray | None = None
    stats: dict = field(default_factory=dict)

    @property
    def n_days(self) -> int:
        return len(self.dates)

    @property
    def n_stocks(self) -> int:
        return len(self.tickers)

    def sample_valid(self) -> np.ndarray:
        """Validity of the joint (per-stock + router) model input."""
        return self.valid & self.router_valid[:, None]


def sma(close: np.ndarray, window: int) -> np.ndarray:
    out = np.full_like(close, np.nan)
    for t in range(window - 1, len(close)):
        out[t] = np.mean(close[t - window + 1:t + 1])
    return out


def ema(close: np.ndarray, window: int) -> np.ndarray:
    """EMA seeded with the first value (pandas adjust=False convention)."""
    alpha = 2.0 / (window + 1.0)
    out = np.empty_like(close)
    out[0] = close[0]
    for t in range(1, len(close)):
        out[t] = alpha * close[t] + (1.0 - alpha) * out[t - 1]
    return out


def rsi(close: np.ndarray, window: int = 14) -> np.ndarray:
    """Wilder's RSI: simple first average then recursive smoothing."""
    n = len(close)
    out = np.full(n, np.nan)
    if n <= window:
        return out
    delta = np.diff(close)
    gain = np.maximum(delta, 0.0)
    loss = np.maximum(-delta, 0.0)
    avg_gain = gain[:window].mean()
    avg_loss = loss[:window].mean()
    out[window] = _rsi_value(avg_gain, avg_loss)
    for t in range(window + 1, n):
        avg_gain = (avg_gain * (window - 1) + gain[t - 1]) / window
        avg_loss = (avg_loss * (window - 1) + loss[t - 1]) / window
        out[t] = _rsi_value(avg_gain, avg_loss)
    return out


def _rsi_value(avg_gain: float, avg_loss: float) -> float:
    if avg_loss == 0.0 and avg_gain == 0.0:
        return 50.0
    if avg_loss == 0.0:
        return 100.0
    rs = avg_gain / avg_loss
    return 100.0 - 100.0 / (1.0 + rs)


def macd(close: np.ndarray, fast: int = 12, slow: int = 26,
         signal: int = 9) -> tuple[np.ndarray, np.ndarray]:
    line = ema(close, fast) - ema(close, slow)
    sig = ema(line, signal)
    return line, line - sig


def rolling_volatility(log_returns: np.ndarray, window: int) -> np.ndarray:
    """Population std of the trailing `window` log returns."""
    out = np.full_like(log_returns, np.nan)
    for t in range(window - 1, len(log_returns)):
        seg = log_returns[t - window + 1:t + 1]
        if np.any(np.isnan(seg)):
            continue
        out[t] = np.std(seg)
    return out


def compute_indicators(panel: OhlcvPanel) -> FeaturePanel:
    """Derive the raw (unnormalized) 17-feature panel from an imputed panel."""
    n_days, n_stocks = panel.n_days, panel.n_stocks
    features = np.full((n_days, n_stocks, len(FEATURE_NAMES)), np.nan)
    valid = np.zeros((n_days, n_stocks), dtype=bool)

    for s in range(n_stocks):
        close = panel.close[:, s]
        have = ~np.isnan(close)
        if not have.any():
            raise DataError(f"{panel.tickers[s]}: no data")
        first = int(np.argmax(have))
        c = close[first:]
        if np.any(np.isnan(c)):
            raise DataError(f"{panel.tickers[s]}: interior gap; impute first")
        rows = slice(first, n_days)
        features[rows, s, 0] = panel.open[rows, s]
        features[rows, s, 1] = panel.high[rows, s]
        features[rows, s, 2] = panel.low[rows, s]
        features[rows, s, 3] = c
        features[rows, s, 4] = panel.volume[rows, s]
        features[rows, s, 5] = sma(c, 5)
        features[rows, s, 6] = sma(c, 10)
        features[rows, s, 7] = sma(c, 20)
        features[rows, s, 8] = ema(c, 5)
        features[rows, s, 9] = ema(c, 10)
        features[rows, s, 10] = ema(c, 20)
        features[rows, s, 11] = rsi(c, 14)
        line, hist = macd(c)
        features[rows, s, 12] = line
        features[rows, s, 13] = hist
        ret = np.full(len(c), np.nan)
        logret = np.full(len(c), np.nan)
        ret[1:] = c[1:] / c[:-1] - 1.0
        logret[1:] = np.log(c[1:] / c[:-1])
        features[rows, s, 14] = ret
        features[rows, s, 15] = logret
        features[rows, s, 16] = rolling_volatility(logret, 20)
        if len(c) > WARMUP_DAYS:
            valid[first + WARMUP_DAYS:, s] = True

    router, router_valid = build_router_features(panel, features, valid)
    return FeaturePanel(tickers=list(panel.tickers), dates=list(panel.dates),
                        features=features, valid=valid,
                        router=router, router_valid=router_valid)


def mean_pairwise_correlation(returns: np.ndarray) -> float:
    """Mean of upper-triangle Pearson correlations; columns are stocks."""
    n_stocks = returns.shape[1]
    if n_stocks < 2:
        raise DataError("pairwise correlation needs at least 2 stocks")
    centered = returns - returns.mean(axis=0)
    norms = np.sqrt((centered ** 2).sum(axis=0))
    norms[norms == 0.0] = np.inf   # constant series correlate as 0
    unit = centered / norms
    corr = unit.T @ unit
    iu = np.triu_indices(n_stocks, k=1)
    return float(corr[iu].mean())


def build_router_features(panel: OhlcvPanel, features: np.ndarray,
                          valid_hint: np.ndarray | None = None
                          ) -> tuple[np.ndarray, np.ndarray]:
    """Market-level 6-vector per day; see ROUTER_NAMES for the layout."""
    if panel.n_stocks < 2:
        raise DataError("router correlation change is undefined for one stock")
    if panel.vix is None or panel.sentiment is None or panel.post_velocity is None:
        raise DataError("router features need the market series")
    n_days = panel.n_days
    router = np.full((n_days, len(ROUTER_NAMES)), np.nan)
    logret = np.full((n_days, panel.n_stocks), np.nan)
    close = panel.close
    with np.errstate(invalid="ignore", divide="ignore"):
        logret[1:] = np.log(close[1:] / close[:-1])

    vol5 = np.full((n_days, panel.n_stocks), np.nan)
    vol20 = np.full((n_days, panel.n_stocks), np.nan)
    for s in range(panel.n_stocks):
        vol5[:, s] = rolling_volatility(logret[:, s], 5)
        vol20[:, s] = rolling_volatility(logret[:, s], 20)
    # cross-stock means over stocks whose window is available
    for col, vols in ((0, vol5), (1, vol20)):
        counts = (~np.isnan(vols)).sum(axis=1)
        sums = np.nansum(vols, axis=1)
        router[:, col] = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)

    router[1:, 2] = (panel.vix[1:] - panel.vix[:-1]) / panel.vix[:-1]

    w = CORRELATION_WINDOW
    mean_corr = np.full(n_days, np.nan)
    for t in range(n_days):
        window = logret[t - w + 1:t + 1]
        if t - w + 1 < 0 or np.any(np.isnan(window)):
            continue
        mean_corr[t] = mean_pairwise_correlation(window)
    router[1:, 3] = mean_corr[1:] - mean_corr[:-1]

    router[:, 4] = np.abs(panel.sentiment)
    router[:, 5] = panel.post_velocity

    router_valid = ~np.any(np.isnan(router), axis=1)
    return router, router_valid


def recompute_prefix(panel: OhlcvPanel, through_day: int) -> FeaturePanel:
    """Indicators on the [0..through_day] prefix only (causality oracle)."""
    sliced = OhlcvPanel(
        tickers=list(panel.tickers), dates=list(panel.dates[:through_day + 1]),
        open=panel.open[:through_day + 1], high=panel.high[:through_day + 1],
        low=panel.low[:through_day + 1], close=panel.close[:through_day + 1],
        volume=panel.volume[:through_day + 1],
        present=panel.present[:through_day + 1], sectors=dict(panel.sectors),
        vix=None if panel.vix is None else panel.vix[:through_day + 1],
        sentiment=None if panel.sentiment is None else panel.sentiment[:through_day + 1],
        post_velocity=(None if panel.post_velocity is None
                       else panel.post_velocity[:through_day + 1]),
    )
    return compute_indicators(sliced)
