"""Composite training objective: MSE + directional BCE + L2 regularization."""

from __future__ import annotations

import numpy as np

from ..numcore import Tensor, add, clip, log, multiply, square, sub, tsum

LAMBDA_MSE = 1.0
LAMBDA_DIR = 0.5
LAMBDA_REG = 1e-4
PROB_CLIP = 1e-7


def true_direction(y_now: np.ndarray, y_future: np.ndarray) -> np.ndarray:
    """d = 1 when the future price exceeds the current one."""
    return (np.asarray(y_future) > np.asarray(y_now)).astype(np.float64)


def composite_loss(price_pred: Tensor, dir_prob: Tensor, targets: np.ndarray,
                   directions: np.ndarray, sample_mask: np.ndarray,
                   params: dict[str, Tensor],
                   lambda_mse: float = LAMBDA_MSE,
                   lambda_dir: float = LAMBDA_DIR,
                   lambda_reg: float = LAMBDA_REG) -> Tensor:
    """Masked composite loss over (batch, stock, horizon) predictions.

    `sample_mask` (batch, stock) selects the supervised entries; probabilities
    are clipped to [1e-7, 1 - 1e-7] before the logs.
    """
    targets = np.asarray(targets, dtype=np.float64)
    mask = np.asarray(sample_mask, dtype=np.float64)
    if mask.ndim == targets.ndim - 1:
        mask = np.broadcast_to(mask[..., None], targets.shape)
    count = float(mask.sum())
    if count == 0:
        raise ValueError("composite loss needs at least one supervised sample")
    mask_t = Tensor(mask)
    inv_count = Tensor(1.0 / count)

    err = square(sub(price_pred, Tensor(targets)))
    mse = multiply(tsum(multiply(err, mask_t)), inv_count)

    d = np.asarray(directions, dtype=np.float64)
    p = clip(dir_prob, PROB_CLIP, 1.0 - PROB_CLIP)
    bce_terms = add(multiply(Tensor(d), log(p)),
                    multiply(Tensor(1.0 - d), log(sub(Tensor(1.0), p))))
    dir_loss = multiply(tsum(multiply(bce_terms, mask_t)), Tensor(-1.0 / count))

    reg = None
    for tensor in params.values():
        term = tsum(square(tensor))
        reg = term if reg is None else add(reg, term)

    total = add(multiply(Tensor(lambda_mse), mse),
                multiply(Tensor(lambda_dir), dir_loss))
    if reg is not None:
        total = add(total, multiply(Tensor(lambda_reg), reg))
    return total
