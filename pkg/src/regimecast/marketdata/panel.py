"""OHLCV panel container, CSV ingestion, and gap imputation.

CSV schemas:
  prices:   date,ticker,open,high,low,close,volume   (one row per pair)
  market:   date,vix,sentiment,post_velocity
  earnings: date,ticker,surprise
  sectors:  ticker,sector
Missing (date, ticker) rows mean missing data; IPO-style late starts keep
their all-missing prefix.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from datetime import date as _date

import numpy as np

from ..errors import DataError, OrderingError, ParseError

PRICE_FIELDS = ("open", "high", "low", "close", "volume")


@dataclass
class OhlcvPanel:
    tickers: list[str]
    dates: list[str]                   # ISO-8601, strictly increasing
    open: np.ndarray                   # (n_days, n_stocks), NaN where missing
    high: np.ndarray
    low: np.ndarray
    close: np.ndarray
    volume: np.ndarray
    present: np.ndarray                # bool (n_days, n_stocks): observed rows
    sectors: dict[str, str] = field(default_factory=dict)
    vix: np.ndarray | None = None      # (n_days,)
    sentiment: np.ndarray | None = None
    post_velocity: np.ndarray | None = None
    earnings: list[tuple[int, int, float]] = field(default_factory=list)
    regimes: np.ndarray | None = None  # optional ground truth (0 calm, 1 crisis)
    event_flags: np.ndarray | None = None  # optional (n_days, n_stocks) bool

    @property
    def n_days(self) -> int:
        return len(self.dates)

    @property
    def n_stocks(self) -> int:
        return len(self.tickers)

    def validate(self) -> "OhlcvPanel":
        if list(self.dates) != sorted(set(self.dates)):
            raise OrderingError("panel calendar must be strictly increasing")
        obs = self.present
        oc_max = np.fmax(self.open, self.close)
        oc_min = np.fmin(self.open, self.close)
        bad_high = obs & (self.high < oc_max - 1e-12)
        bad_low = obs & (self.low > oc_min + 1e-12)
        if np.any(bad_high) or np.any(bad_low):
            d, s = np.argwhere(bad_high | bad_low)[0]
            raise DataError(
                f"high/low bracket violated at {self.dates[d]} {self.tickers[s]}")
        if np.any(obs & (self.volume < 0)):
            raise DataError("negative volume")
        if self.post_velocity is not None and np.any(self.post_velocity < 0):
            raise DataError("negative post velocity")
        missing_sector = [t for t in self.tickers if t not in self.sectors]
        if missing_sector:
            raise DataError(f"sector map does not cover: {missing_sector}")
        return self

    def sector_codes(self) -> np.ndarray:
        names = sorted(set(self.sectors[t] for t in self.tickers))
        index = {name: i for i, name in enumerate(names)}
        return np.array([index[self.sectors[t]] for t in self.tickers], dtype=np.intp)


def _parse_date(text: str, path: str, line: int) -> str:
    try:
        return _date.fromisoformat(text.strip()).isoformat()
    except ValueError:
        raise ParseError(f"{path}:{line}: bad date {text!r}")


def _parse_float(text: str, path: str, line: int, name: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ParseError(f"{path}:{line}: bad {name} {text!r}")


def _read_rows(path, expected_header):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}:1: empty file")
        if [h.strip() for h in header] != list(expected_header):
            raise ParseError(
                f"{path}:1: expected header {','.join(expected_header)}")
        for line, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != len(expected_header):
                raise ParseError(f"{path}:{line}: expected "
                                 f"{len(expected_header)} fields, got {len(row)}")
            yield line, row


def load_ohlcv_csv(prices_path, sectors_path, market_path=None,
                   earnings_path=None, regimes_path=None) -> OhlcvPanel:
    """Load the CSV bundle into a panel aligned on the union calendar."""
    per_ticker: dict[str, dict[str, tuple]] = {}
    last_date: dict[str, str] = {}
    for line, row in _read_rows(prices_path, ("date", "ticker", "open", "high",
                                              "low", "close", "volume")):
        d = _parse_date(row[0], prices_path, line)
        ticker = row[1].strip()
        if not ticker:
            raise ParseError(f"{prices_path}:{line}: empty ticker")
        vals = tuple(_parse_float(row[i], prices_path, line, name)
                     for i, name in ((2, "open"), (3, "high"), (4, "low"),
                                     (5, "close"), (6, "volume")))
        prev = last_date.get(ticker)
        if prev is not None and d <= prev:
            raise OrderingError(
                f"{prices_path}:{line}: dates for {ticker} not increasing")
        last_date[ticker] = d
        per_ticker.setdefault(ticker, {})[d] = vals

    if not per_ticker:
        raise DataError(f"{prices_path}: no price rows")
    tickers = sorted(per_ticker)
    dates = sorted({d for rows in per_ticker.values() for d in rows})
    n_days, n_stocks = len(dates), len(tickers)
    day_index = {d: i for i, d in enumerate(dates)}

    arrays = {name: np.full((n_days, n_stocks), np.nan) for name in PRICE_FIELDS}
    present = np.zeros((n_days, n_stocks), dtype=bool)
    for s, ticker in enumerate(tickers):
        for d, vals in per_ticker[ticker].items():
            t = day_index[d]
            present[t, s] = True
            for name, v in zip(PRICE_FIELDS, vals):
                arrays[name][t, s] = v

    sectors = {}
    for line, row in _read_rows(sectors_path, ("ticker", "sector")):
        sectors[row[0].strip()] = row[1].strip()

    panel = OhlcvPanel(tickers=tickers, dates=dates, present=present,
                       sectors=sectors, **arrays)

    if market_path is not None:
        vix = np.full(n_days, np.nan)
        sentiment = np.full(n_days, np.nan)
        velocity = np.full(n_days, np.nan)
        for line, row in _read_rows(market_path, ("date", "vix", "sentiment",
                                                  "post_velocity")):
            d = _parse_date(row[0], market_path, line)
            t = day_index.get(d)
            if t is None:
                continue
            vix[t] = _parse_float(row[1], market_path, line, "vix")
            sentiment[t] = _parse_float(row[2], market_path, line, "sentiment")
            velocity[t] = _parse_float(row[3], market_path, line, "post_velocity")
        if np.any(np.isnan(vix)):
            missing = [dates[i] for i in np.flatnonzero(np.isnan(vix))[:3]]
            raise DataError(f"{market_path}: missing market rows for {missing}...")
        panel.vix, panel.sentiment, panel.post_velocity = vix, sentiment, velocity

    if earnings_path is not None:
        ticker_index = {t: i for i, t in enumerate(tickers)}
        events = []
        for line, row in _read_rows(earnings_path, ("date", "ticker", "surprise")):
            d = _parse_date(row[0], earnings_path, line)
            ticker = row[1].strip()
            if ticker not in ticker_index or d not in day_index:
                continue
            events.append((day_index[d], ticker_index[ticker],
                           _parse_float(row[2], earnings_path, line, "surprise")))
        panel.earnings = sorted(events)

    if regimes_path is not None:
        regimes = np.zeros(n_days, dtype=np.intp)
        for line, row in _read_rows(regimes_path, ("date", "regime")):
            d = _parse_date(row[0], regimes_path, line)
            t = day_index.get(d)
            if t is not None:
                regimes[t] = 1 if row[1].strip() == "crisis" else 0
        panel.regimes = regimes

    return panel.validate()


def _fill_series(values: np.ndarray, observed: np.ndarray, mode: str) -> np.ndarray:
    """Fill interior gaps of one column. Leading gaps stay NaN."""
    out = values.copy()
    obs_idx = np.flatnonzero(observed)
    if obs_idx.size == 0:
        raise DataError("all-missing series cannot be imputed")
    first = obs_idx[0]
    prev = first
    for t in range(first + 1, len(values)):
        if observed[t]:
            gap = t - prev - 1
            if gap > 0:
                if mode == "train" and gap <= 2:
                    # linear interpolation between surrounding known values
                    step = (values[t] - values[prev]) / (gap + 1)
                    for j in range(1, gap + 1):
                        out[prev + j] = values[prev] + step * j
                else:
                    out[prev + 1:t] = out[prev]
            prev = t
    if prev < len(values) - 1:
        out[prev + 1:] = out[prev]
    return out


def impute(panel: OhlcvPanel, mode: str) -> OhlcvPanel:
    """Fill price gaps: train mode interpolates 1-2 day gaps, longer gaps and
    eval mode forward-fill. Leading gaps remain missing."""
    if mode not in ("train", "eval"):
        raise ValueError(f"impute mode must be train or eval, got {mode!r}")
    new_fields = {}
    for name in PRICE_FIELDS:
        arr = getattr(panel, name).copy()
        for s in range(panel.n_stocks):
            # observed = any value already present (idempotent on filled panels)
            observed = ~np.isnan(arr[:, s])
            if not observed.any():
                raise DataError(
                    f"all-missing series for {panel.tickers[s]} cannot be imputed")
            arr[:, s] = _fill_series(arr[:, s], observed, mode)
        new_fields[name] = arr
    return replace(panel, **new_fields)
