"""Chronological train/valid/test day splits (no shuffling, no overlap)."""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import ConfigError


@dataclass(frozen=True)
class Splits:
    train_end: int     # exclusive
    valid_end: int     # exclusive
    n_days: int

    @property
    def train_days(self) -> range:
        return range(0, self.train_end)

    @property
    def valid_days(self) -> range:
        return range(self.train_end, self.valid_end)

    @property
    def test_days(self) -> range:
        return range(self.valid_end, self.n_days)

    def of(self, name: str) -> range:
        try:
            return {"train": self.train_days, "valid": self.valid_days,
                    "test": self.test_days}[name]
        except KeyError:
            raise ConfigError(f"unknown split {name!r}")


def split_chronological(n_days: int, fractions) -> Splits:
    train_f, valid_f, test_f = fractions
    if train_f <= 0 or valid_f < 0 or test_f < 0:
        raise ConfigError("split fractions must be positive")
    if abs(train_f + valid_f + test_f - 1.0) > 1e-9:
        raise ConfigError("split fractions must sum to 1")
    train_end = int(n_days * train_f)
    valid_end = int(n_days * (train_f + valid_f))
    if train_end == 0:
        raise ConfigError("empty training split")
    return Splits(train_end=train_end, valid_end=valid_end, n_days=n_days)
