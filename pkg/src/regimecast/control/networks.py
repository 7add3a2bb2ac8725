"""Actor and twin-critic MLPs (two hidden layers, ReLU)."""

from __future__ import annotations

import numpy as np

from ..numcore import Tensor, clip, concat, linear, relu
from ..regime import uniform_init

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0


def _stack(rng, sizes, prefix):
    params = {}
    for i, (d_in, d_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        params[f"{prefix}w{i}"] = Tensor(uniform_init(rng, (d_in, d_out)),
                                         requires_grad=True)
        params[f"{prefix}b{i}"] = Tensor(np.zeros(d_out), requires_grad=True)
    return params


class GaussianActor:
    """state -> (mean, log-std) of a diagonal Gaussian over pre-squash actions."""

    def __init__(self, state_dim: int, action_dim: int, hidden_dim: int,
                 rng: np.random.Generator):
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.params = _stack(rng, (state_dim, hidden_dim, hidden_dim), "actor.")
        self.params["actor.w_mu"] = Tensor(
            uniform_init(rng, (hidden_dim, action_dim)), requires_grad=True)
        self.params["actor.b_mu"] = Tensor(np.zeros(action_dim), requires_grad=True)
        self.params["actor.w_ls"] = Tensor(
            uniform_init(rng, (hidden_dim, action_dim)), requires_grad=True)
        self.params["actor.b_ls"] = Tensor(np.zeros(action_dim), requires_grad=True)

    def forward(self, states: Tensor) -> tuple[Tensor, Tensor]:
        p = self.params
        h = relu(linear(states, p["actor.w0"], p["actor.b0"]))
        h = relu(linear(h, p["actor.w1"], p["actor.b1"]))
        mu = linear(h, p["actor.w_mu"], p["actor.b_mu"])
        log_std = clip(linear(h, p["actor.w_ls"], p["actor.b_ls"]),
                       LOG_STD_MIN, LOG_STD_MAX)
        return mu, log_std


class QCritic:
    """(state, action) -> scalar value; input is the concatenated pair."""

    def __init__(self, state_dim: int, action_dim: int, hidden_dim: int,
                 rng: np.random.Generator, name: str):
        self.name = name
        sizes = (state_dim + action_dim, hidden_dim, hidden_dim, 1)
        self.params = _stack(rng, sizes, f"{name}.")

    def forward(self, states: Tensor, actions: Tensor) -> Tensor:
        p = self.params
        x = concat([states, actions], axis=-1)
        h = relu(linear(x, p[f"{self.name}.w0"], p[f"{self.name}.b0"]))
        h = relu(linear(h, p[f"{self.name}.w1"], p[f"{self.name}.b1"]))
        return linear(h, p[f"{self.name}.w2"], p[f"{self.name}.b2"])
