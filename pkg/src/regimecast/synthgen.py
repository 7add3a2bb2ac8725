"""Seeded synthetic regime-switching market generator.

Log returns follow a two-regime factor model (market + sector + idiosyncratic
noise) whose drift, autocorrelation, and volatility depend on a hidden
calm/crisis Markov chain.  The generator also emits a VIX-like index (scaled
10-day realized market volatility), a sentiment series weakly coupled to the
next day's market return with spikes at crisis onsets, a Poisson post-velocity
count (rate x5 in crisis), and an earnings calendar with return jumps, so
every downstream feature carries verifiable signal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import date, timedelta

import numpy as np

from .errors import ConfigError
from .marketdata.panel import OhlcvPanel
from .rng import RngHub

SECTOR_NAMES = ("industrials", "technology", "utilities", "finance",
                "energy", "health", "consumer", "materials", "telecom")


@dataclass
class SynthConfig:
    n_stocks: int = 8
    n_days: int = 3000
    n_sectors: int = 3
    seed: int = 0
    sigma_calm: float = 0.01          # per-day total return vol in calm regime
    crisis_vol_multiplier: float = 4.0  # k: sigma_crisis = k * sigma_calm
    p_calm_to_crisis: float = 0.01
    p_crisis_to_calm: float = 0.10
    drift_calm: float = 0.0004
    drift_crisis: float = -0.003
    ar_calm: float = 0.15             # market-factor AR(1) per regime
    ar_crisis: float = -0.25
    market_share: float = 0.55        # factor loadings (squares sum to 1)
    sector_share: float = 0.35
    earnings_every: int = 63
    earnings_jump: float = 0.02       # std of earnings-day return surprise
    sentiment_coupling: float = 0.4   # sentiment ~ coupling * next-day market z
    sentiment_spike_rate: float = 0.01
    post_rate_calm: float = 20.0
    start_date: str = "2005-01-03"

    def validate(self) -> "SynthConfig":
        for name in ("p_calm_to_crisis", "p_crisis_to_calm"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"{name} must lie in [0,1], got {p}")
        if self.crisis_vol_multiplier < 1.0:
            raise ConfigError("crisis_vol_multiplier must be >= 1")
        if self.n_sectors > self.n_stocks:
            raise ConfigError("n_sectors cannot exceed n_stocks")
        if self.sigma_calm <= 0:
            raise ConfigError("sigma_calm must be positive")
        if self.market_share ** 2 + self.sector_share ** 2 >= 1.0:
            raise ConfigError("factor shares leave no idiosyncratic variance")
        return self


@dataclass
class SynthPanel:
    panel: OhlcvPanel
    regimes: np.ndarray              # (n_days,) 0 calm / 1 crisis
    event_flags: np.ndarray          # (n_days, n_stocks) earnings-day flags


def trading_calendar(start: str, n_days: int) -> list[str]:
    """Weekday-only calendar starting at `start` (ISO)."""
    out = []
    d = date.fromisoformat(start)
    while len(out) < n_days:
        if d.weekday() < 5:
            out.append(d.isoformat())
        d += timedelta(days=1)
    return out


def generate(config: SynthConfig) -> SynthPanel:
    cfg = config.validate()
    hub = RngHub(cfg.seed)
    n, s = cfg.n_days, cfg.n_stocks

    # hidden regime chain
    rng = hub.stream("synth.regimes")
    regimes = np.zeros(n, dtype=np.intp)
    state = 0
    for t in range(n):
        regimes[t] = state
        u = rng.random()
        if state == 0 and u < cfg.p_calm_to_crisis:
            state = 1
        elif state == 1 and u < cfg.p_crisis_to_calm:
            state = 0

    k = cfg.crisis_vol_multiplier
    vol_mult = np.where(regimes == 1, k, 1.0)
    drift = np.where(regimes == 1, cfg.drift_crisis, cfg.drift_calm)
    phi = np.where(regimes == 1, cfg.ar_crisis, cfg.ar_calm)

    a, b = cfg.market_share, cfg.sector_share
    c = math.sqrt(1.0 - a * a - b * b)
    # innovation scales chosen so stationary per-stock vol ~= sigma * vol_mult
    rng_m = hub.stream("synth.market")
    market = np.zeros(n)
    prev = 0.0
    for t in range(n):
        innov_sd = a * cfg.sigma_calm * vol_mult[t] * math.sqrt(
            max(1.0 - phi[t] * phi[t], 1e-6))
        market[t] = drift[t] + phi[t] * prev + innov_sd * rng_m.normal()
        prev = market[t] - drift[t]

    rng_sec = hub.stream("synth.sectors")
    sector_factors = rng_sec.normal(size=(n, cfg.n_sectors)) * (
        b * cfg.sigma_calm * vol_mult[:, None])
    sectors = np.array([i % cfg.n_sectors for i in range(s)], dtype=np.intp)

    rng_idio = hub.stream("synth.idio")
    idio = rng_idio.normal(size=(n, s)) * (c * cfg.sigma_calm * vol_mult[:, None])

    # staggered earnings every ~earnings_every trading days, with jumps
    rng_earn = hub.stream("synth.earnings")
    event_flags = np.zeros((n, s), dtype=bool)
    earnings: list[tuple[int, int, float]] = []
    jumps = np.zeros((n, s))
    for i in range(s):
        offset = 5 + (i * cfg.earnings_every) // max(s, 1)
        for t in range(offset, n, cfg.earnings_every):
            surprise = rng_earn.normal() * cfg.earnings_jump
            event_flags[t, i] = True
            earnings.append((t, i, surprise))
            jumps[t, i] = surprise

    returns = market[:, None] + sector_factors[:, sectors] + idio + jumps

    # prices and an intraday bridge that preserves high/low bracketing
    rng_px = hub.stream("synth.prices")
    base = 80.0 + 8.0 * np.arange(s)
    close = base * np.exp(np.cumsum(returns, axis=0))
    day_sd = cfg.sigma_calm * vol_mult[:, None]
    open_ = np.empty_like(close)
    open_[0] = base * np.exp(0.25 * day_sd[0] * rng_px.normal(size=s))
    open_[1:] = close[:-1] * np.exp(0.25 * day_sd[1:] * rng_px.normal(size=(n - 1, s)))
    oc_max = np.maximum(open_, close)
    oc_min = np.minimum(open_, close)
    high = oc_max * np.exp(np.abs(rng_px.normal(size=(n, s))) * 0.5 * day_sd)
    low = oc_min * np.exp(-np.abs(rng_px.normal(size=(n, s))) * 0.5 * day_sd)
    volume = np.round(1e6 * np.exp(0.3 * rng_px.normal(size=(n, s)))
                      * (1.0 + 1.5 * (regimes == 1))[:, None])

    # VIX-like: scaled 10-day realized market vol + noise
    rng_vix = hub.stream("synth.vix")
    vix = np.empty(n)
    for t in range(n):
        window = market[max(0, t - 9):t + 1]
        rv = np.std(window) if len(window) >= 2 else a * cfg.sigma_calm
        vix[t] = max(5.0, 2200.0 * rv + rng_vix.normal() * 0.8)

    # sentiment couples to the NEXT day's market return; spikes at crisis onsets
    rng_sent = hub.stream("synth.sentiment")
    z_next = np.zeros(n)
    denom = a * cfg.sigma_calm * vol_mult
    z_next[:-1] = market[1:] / np.maximum(denom[1:], 1e-12)
    sentiment = cfg.sentiment_coupling * z_next + 0.25 * rng_sent.normal(size=n)
    onset = (regimes == 1) & np.concatenate(([False], regimes[:-1] == 0))
    sentiment[onset] -= 0.8
    spikes = rng_sent.random(n) < cfg.sentiment_spike_rate
    sentiment[spikes] -= 0.6 * np.sign(rng_sent.normal(size=int(spikes.sum())) + 0.7)
    sentiment = np.clip(sentiment, -1.0, 1.0)

    rng_post = hub.stream("synth.posts")
    rates = cfg.post_rate_calm * (1.0 + 4.0 * (regimes == 1))
    posts = rng_post.poisson(rates).astype(np.float64)

    tickers = [f"SYN{i:02d}" for i in range(s)]
    sector_map = {tickers[i]: SECTOR_NAMES[sectors[i] % len(SECTOR_NAMES)]
                  for i in range(s)}
    panel = OhlcvPanel(
        tickers=tickers, dates=trading_calendar(cfg.start_date, n),
        open=open_, high=high, low=low, close=close, volume=volume,
        present=np.ones((n, s), dtype=bool), sectors=sector_map,
        vix=vix, sentiment=sentiment, post_velocity=posts,
        earnings=earnings, regimes=regimes.copy(), event_flags=event_flags,
    ).validate()
    return SynthPanel(panel=panel, regimes=regimes, event_flags=event_flags)


def write_csv_bundle(synth: SynthPanel, out_dir) -> dict[str, str]:
    """Write the marketdata CSV schema plus regimes.csv; returns the paths."""
    import csv
    import os

    panel = synth.panel
    os.makedirs(out_dir, exist_ok=True)
    paths = {name: os.path.join(out_dir, f"{name}.csv")
             for name in ("prices", "market", "earnings", "sectors", "regimes")}

    with open(paths["prices"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["date", "ticker", "open", "high", "low", "close", "volume"])
        for t, d in enumerate(panel.dates):
            for i, ticker in enumerate(panel.tickers):
                w.writerow([d, ticker,
                            f"{panel.open[t, i]:.6f}", f"{panel.high[t, i]:.6f}",
                            f"{panel.low[t, i]:.6f}", f"{panel.close[t, i]:.6f}",
                            f"{panel.volume[t, i]:.0f}"])
    with open(paths["market"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["date", "vix", "sentiment", "post_velocity"])
        for t, d in enumerate(panel.dates):
            w.writerow([d, f"{panel.vix[t]:.6f}", f"{panel.sentiment[t]:.6f}",
                        f"{panel.post_velocity[t]:.0f}"])
    with open(paths["earnings"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["date", "ticker", "surprise"])
        for t, i, surprise in panel.earnings:
            w.writerow([panel.dates[t], panel.tickers[i], f"{surprise:.8f}"])
    with open(paths["sectors"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["ticker", "sector"])
        for ticker in panel.tickers:
            w.writerow([ticker, panel.sectors[ticker]])
    with open(paths["regimes"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["date", "regime"])
        for t, d in enumerate(panel.dates):
            w.writerow([d, "crisis" if synth.regimes[t] else "calm"])
    return paths
