"""Autoencoder regime detector: reconstruction error as anomaly score.

Encoder ReLU(W2 ReLU(W1 x + b1) + b2) with W1 (64 x d_in), W2 (32 x 64);
decoder W4 ReLU(W3 z + b3) + b4 with a linear final layer.  Trained on
stable-period rows only; the routing threshold starts at the 95th percentile
of training-set reconstruction errors and is adjusted downstream.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .errors import DataError, DimensionError
from .numcore import (
    AdamState,
    Tape,
    Tensor,
    adam_step,
    backward,
    linear,
    relu,
    square,
    tmean,
    transpose,
    tsum,
)

AE_WEIGHT_NAMES = ("w1", "b1", "w2", "b2", "w3", "b3", "w4", "b4")


def uniform_init(rng: np.random.Generator, shape: tuple) -> np.ndarray:
    """Fan-scaled uniform init: +-sqrt(6 / (fan_in + fan_out))."""
    if len(shape) == 1:
        return np.zeros(shape)
    fan_in, fan_out = shape[-2], shape[-1]
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def percentile(values: np.ndarray, q: float) -> float:
    """Linear-interpolation percentile between order statistics."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise DataError("percentile of an empty error set")
    return float(np.percentile(values, q, method="linear"))


def init_threshold(training_errors: np.ndarray, q: float = 95.0) -> float:
    return percentile(training_errors, q)


def route(errors, tau: float):
    """Pathway label per sample: True = event (e >= tau, boundary inclusive)."""
    return np.asarray(errors, dtype=np.float64) >= tau


class RegimeAutoencoder(BaseEstimator):
    """23 -> 64 -> 32 -> 64 -> 23 reconstruction network.

    Weight matrices are stored in the (out, in) orientation of the defining
    equations, so the checkpoint manifest shows the documented shapes.
    """

    def __init__(self, input_dim: int = 23, hidden_dim: int = 64,
                 latent_dim: int = 32, lr: float = 1e-3, batch_size: int = 64,
                 max_epochs: int = 20, patience: int = 3,
                 val_fraction: float = 0.15, seed: int = 0):
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        self.latent_dim = latent_dim
        self.lr = lr
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.val_fraction = val_fraction
        self.seed = seed

    # ------------------------------------------------------------- plumbing

    def init_params(self, rng: np.random.Generator | None = None) -> dict:
        if rng is None:
            rng = np.random.default_rng(self.seed)
        d_in, h, z = self.input_dim, self.hidden_dim, self.latent_dim
        self.params_ = {
            "w1": Tensor(uniform_init(rng, (h, d_in)), requires_grad=True),
            "b1": Tensor(np.zeros(h), requires_grad=True),
            "w2": Tensor(uniform_init(rng, (z, h)), requires_grad=True),
            "b2": Tensor(np.zeros(z), requires_grad=True),
            "w3": Tensor(uniform_init(rng, (h, z)), requires_grad=True),
            "b3": Tensor(np.zeros(h), requires_grad=True),
            "w4": Tensor(uniform_init(rng, (d_in, h)), requires_grad=True),
            "b4": Tensor(np.zeros(d_in), requires_grad=True),
        }
        return self.params_

    def _require_params(self):
        if not hasattr(self, "params_"):
            raise DataError("autoencoder has no weights; call fit or init_params")

    def encode_t(self, x: Tensor) -> Tensor:
        p = self.params_
        h1 = relu(linear(x, transpose(p["w1"]), p["b1"]))
        return relu(linear(h1, transpose(p["w2"]), p["b2"]))

    def decode_t(self, z: Tensor) -> Tensor:
        p = self.params_
        h = relu(linear(z, transpose(p["w3"]), p["b3"]))
        return linear(h, transpose(p["w4"]), p["b4"])

    # ----------------------------------------------------------- public API

    def encode(self, x: np.ndarray) -> np.ndarray:
        self._require_params()
        x = self._check_input(x)
        return self.encode_t(Tensor(x)).data

    def decode(self, z: np.ndarray) -> np.ndarray:
        self._require_params()
        z = np.atleast_2d(np.asarray(z, dtype=np.float64))
        if z.shape[-1] != self.latent_dim:
            raise DimensionError(
                f"latent dim {z.shape[-1]} != configured {self.latent_dim}")
        return self.decode_t(Tensor(z)).data

    def reconstruct(self, x: np.ndarray) -> np.ndarray:
        self._require_params()
        x = self._check_input(x)
        return self.decode_t(self.encode_t(Tensor(x))).data

    def score_samples(self, x: np.ndarray) -> np.ndarray:
        """Squared reconstruction error per row (the anomaly score)."""
        x = self._check_input(x)
        recon = self.reconstruct(x)
        return ((x - recon) ** 2).sum(axis=-1)

    def reconstruction_error(self, x: np.ndarray) -> float:
        return float(self.score_samples(np.atleast_2d(x))[0])

    def fit(self, stable_rows: np.ndarray, rng: np.random.Generator | None = None,
            log=None):
        """Train on stable-period rows (chronological order expected).

        Early stopping watches reconstruction loss on the chronological tail
        of the stable rows; best-epoch weights are restored.
        """
        x = self._check_input(stable_rows)
        if x.shape[0] < 4:
            raise DataError(f"too few stable rows to train on: {x.shape[0]}")
        if rng is None:
            rng = np.random.default_rng(self.seed)
        self.init_params(rng)
        n_val = max(1, int(round(self.val_fraction * x.shape[0])))
        train, val = x[:-n_val], x[-n_val:]
        if train.shape[0] == 0:
            raise DataError("validation slice consumed every stable row")

        opt = AdamState(self.params_, lr=self.lr)
        best_val = np.inf
        best = None
        bad_epochs = 0
        self.train_losses_ = []
        for epoch in range(self.max_epochs):
            order = rng.permutation(train.shape[0])
            epoch_loss = 0.0
            for start in range(0, len(order), self.batch_size):
                batch = train[order[start:start + self.batch_size]]
                with Tape() as tape:
                    recon = self.decode_t(self.encode_t(Tensor(batch)))
                    err = square(recon - Tensor(batch))
                    loss = tmean(tsum(err, axis=1))
                grads = backward(tape, loss, params=self.params_.values())
                named = {k: grads[p] for k, p in self.params_.items()}
                adam_step(self.params_, named, opt)
                epoch_loss += float(loss.data) * batch.shape[0]
            epoch_loss /= train.shape[0]
            val_loss = float(self.score_samples(val).mean())
            self.train_losses_.append(epoch_loss)
            if log is not None:
                log(f"ae epoch {epoch + 1}/{self.max_epochs} "
                    f"train={epoch_loss:.6f} val={val_loss:.6f}")
            if val_loss < best_val - 1e-12:
                best_val = val_loss
                best = {k: p.data.copy() for k, p in self.params_.items()}
                bad_epochs = 0
            else:
                bad_epochs += 1
                if bad_epochs >= self.patience:
                    break
        if best is not None:
            for k, p in self.params_.items():
                p.data = best[k]
        self.val_loss_ = best_val
        return self

    def record_training_errors(self, rows: np.ndarray) -> np.ndarray:
        """Score the full training set and keep the sorted error table."""
        errors = self.score_samples(rows)
        self.training_errors_ = np.sort(errors)
        self.threshold_ = init_threshold(self.training_errors_)
        # robust clip bounds for the controller (1st/99th percentiles)
        self.error_bounds_ = (percentile(self.training_errors_, 1.0),
                              percentile(self.training_errors_, 99.0))
        return errors

    def _check_input(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            x = x[None, :]
        if x.shape[-1] != self.input_dim:
            raise DimensionError(
                f"input dim {x.shape[-1]} != configured {self.input_dim}")
        return x


def stable_day_mask(vix: np.ndarray, train_end: int,
                    q: float = 75.0) -> tuple[np.ndarray, float]:
    """Days where VIX sits below the q-th percentile of the train period."""
    cutoff = percentile(np.asarray(vix[:train_end], dtype=np.float64), q)
    return np.asarray(vix) < cutoff, cutoff
