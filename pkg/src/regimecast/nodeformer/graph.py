"""Stock-relationship graph: static initialization and learnable refinement."""

from __future__ import annotations

import numpy as np

from ..errors import LeakageError
from ..numcore import Tensor, add, concat, matmul, sigmoid


def init_edges(sector_codes: np.ndarray, returns: np.ndarray,
               day_indices: np.ndarray, train_end: int) -> np.ndarray:
    """e0_ij = 0.5 * same_sector(i,j) + 0.5 * max(0, corr_ij).

    `returns` rows must come from the training split; `day_indices` carries
    each row's panel day so post-training rows are a hard error.
    """
    day_indices = np.asarray(day_indices)
    if np.any(day_indices >= train_end):
        raise LeakageError(
            "edge initialization received returns from post-training days")
    sector_codes = np.asarray(sector_codes)
    n = sector_codes.shape[0]
    if returns.shape[1] != n:
        raise ValueError(f"returns have {returns.shape[1]} columns for {n} stocks")
    same_sector = (sector_codes[:, None] == sector_codes[None, :]).astype(float)
    corr = np.corrcoef(returns.T)
    e0 = 0.5 * same_sector + 0.5 * np.maximum(corr, 0.0)
    np.fill_diagonal(e0, 1.0)
    return e0


def refine_edges(h_i, h_j, w_e: Tensor, b_e: Tensor) -> Tensor:
    """sigmoid(w_e . [h_i || h_j] + b_e) for a single node pair."""
    h_i = h_i if isinstance(h_i, Tensor) else Tensor(h_i)
    h_j = h_j if isinstance(h_j, Tensor) else Tensor(h_j)
    pair = concat([h_i, h_j], axis=-1)
    from ..numcore import reshape
    logit = add(matmul(reshape(pair, (1, pair.size)),
                       reshape(w_e, (w_e.size, 1))), b_e)
    return sigmoid(logit)
