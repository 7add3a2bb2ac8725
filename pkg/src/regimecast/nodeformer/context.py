"""Event context: the 12-dim conditioning vector for the event pathway.

Layout: [regime embedding r (4) || sentiment spike s (2) || earnings
characterization a (4) || cross-asset stress (2)].  The regime embedding is
looked up from the pathway's trainable 3x4 table; this module produces the
discrete tercile label plus the 8 continuous entries.  All frozen statistics
(VIX terciles, sentiment std, error scale) come from the training split only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import LeakageError
from ..marketdata.panel import OhlcvPanel
from ..regime import percentile

CONTINUOUS_NAMES = ("spike_flag", "spike_magnitude", "days_to_earnings",
                    "hist_surprise", "earnings_window", "sector_surprise",
                    "stress_mean", "stress_std")
EARNINGS_WINDOW = 2
EARNINGS_CYCLE = 63.0


def vix_terciles(vix: np.ndarray, train_end: int) -> tuple[float, float]:
    head = np.asarray(vix[:train_end], dtype=np.float64)
    return (percentile(head, 100.0 / 3.0), percentile(head, 200.0 / 3.0))


def tercile_label(value: float, bounds: tuple[float, float]) -> int:
    if value < bounds[0]:
        return 0
    if value < bounds[1]:
        return 1
    return 2


@dataclass
class EventContext:
    """Per-day context: market-level label + per-stock continuous block."""

    day: int
    regime_label: int                 # VIX tercile 0/1/2
    continuous: np.ndarray            # (n_stocks, 8), CONTINUOUS_NAMES order

    def vectors(self, regime_table: np.ndarray) -> np.ndarray:
        """Materialized (n_stocks, 12) context rows."""
        r = np.broadcast_to(regime_table[self.regime_label],
                            (self.continuous.shape[0], regime_table.shape[1]))
        return np.concatenate([r, self.continuous], axis=1)


class EventContextBuilder:
    """Precomputes labels and continuous context for every panel day."""

    def __init__(self, panel: OhlcvPanel, train_end: int,
                 error_scale: float | None = None):
        if panel.vix is None or panel.sentiment is None:
            raise ValueError("event context requires the market series")
        self.train_end = int(train_end)
        self.tercile_bounds = vix_terciles(panel.vix, train_end)
        self.sentiment_std = float(np.std(panel.sentiment[:train_end]))
        if self.sentiment_std <= 0:
            self.sentiment_std = 1.0
        self.error_scale = float(error_scale) if error_scale else 1.0
        self.n_stocks = panel.n_stocks
        self.labels = np.array([tercile_label(v, self.tercile_bounds)
                                for v in panel.vix], dtype=np.intp)
        self._sentiment = panel.sentiment
        self._earnings_by_stock: list[list[tuple[int, float]]] = [
            [] for _ in range(panel.n_stocks)]
        for t, i, surprise in sorted(panel.earnings):
            self._earnings_by_stock[i].append((t, surprise))
        self._sectors = panel.sector_codes()

    def spike(self, day: int) -> tuple[float, float]:
        s = float(self._sentiment[day])
        flag = 1.0 if abs(s) > 2.0 * self.sentiment_std else 0.0
        magnitude = flag * abs(s) / self.sentiment_std
        return flag, magnitude

    def earnings_block(self, day: int) -> np.ndarray:
        """(n_stocks, 4): days-to-next (normalized), expanding mean |surprise|,
        window flag, sector mean of most recent realized surprises."""
        out = np.zeros((self.n_stocks, 4))
        last_signed = np.full(self.n_stocks, np.nan)
        for i, events in enumerate(self._earnings_by_stock):
            next_gap = EARNINGS_CYCLE
            nearest = np.inf
            past_abs = []
            for t, surprise in events:
                if t >= day:
                    next_gap = min(next_gap, t - day)
                    nearest = min(nearest, t - day)
                    break
                past_abs.append(abs(surprise))
                last_signed[i] = surprise
                nearest = min(nearest, day - t)
            out[i, 0] = min(next_gap, EARNINGS_CYCLE) / EARNINGS_CYCLE
            out[i, 1] = float(np.mean(past_abs)) if past_abs else 0.0
            out[i, 2] = 1.0 if nearest <= EARNINGS_WINDOW else 0.0
        for i in range(self.n_stocks):
            mates = last_signed[self._sectors == self._sectors[i]]
            realized = mates[~np.isnan(mates)]
            out[i, 3] = float(realized.mean()) if realized.size else 0.0
        return out

    def build(self, day: int, errors_today: np.ndarray) -> EventContext:
        """Context for one day given per-stock reconstruction errors e_{i,day}."""
        errors_today = np.asarray(errors_today, dtype=np.float64)
        flag, magnitude = self.spike(day)
        cont = np.zeros((self.n_stocks, 8))
        cont[:, 0] = flag
        cont[:, 1] = magnitude
        cont[:, 2:6] = self.earnings_block(day)
        cont[:, 6] = errors_today.mean() / self.error_scale
        cont[:, 7] = errors_today.std() / self.error_scale
        return EventContext(day=day, regime_label=int(self.labels[day]),
                            continuous=cont)


def build_event_context(day: int, builder: EventContextBuilder,
                        errors_today: np.ndarray) -> EventContext:
    return builder.build(day, errors_today)


def check_train_only(day_indices: np.ndarray, train_end: int, what: str) -> None:
    if np.any(np.asarray(day_indices) >= train_end):
        raise LeakageError(f"{what} must be fit on the training split only")
