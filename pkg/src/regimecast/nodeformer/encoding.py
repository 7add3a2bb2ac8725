"""Sinusoidal temporal encoding over trading-day positions."""

from __future__ import annotations

import numpy as np


def temporal_encoding(t: int, d: int) -> np.ndarray:
    """TE(t, 2k) = sin(t / 10000^(2k/d)), TE(t, 2k+1) = cos(...)."""
    if t < 0:
        raise ValueError(f"position must be non-negative, got {t}")
    out = np.empty(d)
    k = np.arange(0, d, 2)
    angle = t / np.power(10000.0, k / d)
    out[0::2] = np.sin(angle)
    out[1::2] = np.cos(angle[: len(out[1::2])])
    return out


def temporal_encoding_matrix(length: int, d: int) -> np.ndarray:
    positions = np.arange(length)[:, None]
    k = np.arange(0, d, 2)
    angle = positions / np.power(10000.0, k / d)
    out = np.empty((length, d))
    out[:, 0::2] = np.sin(angle)
    out[:, 1::2] = np.cos(angle[:, : out[:, 1::2].shape[1]])
    return out
