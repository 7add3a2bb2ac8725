"""Soft Actor-Critic meta-controller over the routing threshold and blend.

Actions are tanh-squashed Gaussian samples scaled to [-0.1, 0.1]^2; log
probabilities carry the change-of-variables correction, which keeps the
automatic temperature tuning differentiable (plain clipping would not).
Critic targets bootstrap with the elementwise minimum of both target critics.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from ..errors import NumericError, WarmupError
from ..numcore import (
    AdamState,
    Tape,
    Tensor,
    adam_step,
    add,
    backward,
    exp,
    multiply,
    softplus,
    square,
    sub,
    tanh,
    tmean,
    tsum,
)
from .networks import GaussianActor, QCritic
from .replay import ReplayBuffer

LAMBDA_DIR = 0.5
LAMBDA_STABLE = 0.1
LOG_2PI = math.log(2.0 * math.pi)
LOG_2 = math.log(2.0)


def compute_reward(rmse: float, da: float, delta_tau: float,
                   lambda_dir: float = LAMBDA_DIR,
                   lambda_stable: float = LAMBDA_STABLE) -> float:
    """r = -RMSE - lambda_dir * (1 - DA) - lambda_stable * |delta tau|."""
    if rmse < 0:
        raise ValueError(f"rmse must be non-negative, got {rmse}")
    if not 0.0 <= da <= 1.0:
        raise ValueError(f"directional accuracy must lie in [0, 1], got {da}")
    return -rmse - lambda_dir * (1.0 - da) - lambda_stable * abs(delta_tau)


def apply_action(tau: float, alpha: float, action: np.ndarray,
                 error_bounds: tuple[float, float]) -> tuple[float, float]:
    """Clip-updated (tau, alpha).

    The threshold component acts in units normalized by the training-error
    range, so the [-0.1, 0.1] bound is meaningful across datasets."""
    e_min, e_max = error_bounds
    action = np.asarray(action, dtype=np.float64)
    tau_new = float(np.clip(tau + action[0] * (e_max - e_min), e_min, e_max))
    alpha_new = alpha
    if action.shape[0] > 1:
        alpha_new = float(np.clip(alpha + action[1], 0.0, 1.0))
    return tau_new, alpha_new


def build_state(mean_error: float, error_history, volatility: float,
                rmse_prev: float, da_prev: float, alpha_prev: float,
                tau_prev: float) -> np.ndarray:
    """[e_t, e history over 5 days, sigma_t, RMSE, DA, alpha, tau] - length 11."""
    history = np.asarray(error_history, dtype=np.float64)
    if history.shape != (5,):
        raise WarmupError(
            f"need exactly 5 days of error history, got shape {history.shape}")
    state = np.concatenate([[mean_error], history,
                            [volatility, rmse_prev, da_prev, alpha_prev, tau_prev]])
    if not np.all(np.isfinite(state)):
        raise NumericError("controller state contains non-finite entries")
    return state


@dataclass
class SacDiagnostics:
    critic1_loss: float
    critic2_loss: float
    actor_loss: float
    alpha_ent: float
    entropy_estimate: float
    target_mean: float


class SacController:
    """Twin-critic SAC with learned temperature and a FIFO replay buffer."""

    def __init__(self, state_dim: int = 11, action_dim: int = 2,
                 hidden_dim: int = 256, lr: float = 3e-4, gamma: float = 0.99,
                 tau_soft: float = 0.005, buffer_capacity: int = 100_000,
                 batch_size: int = 256, action_scale: float = 0.1,
                 target_entropy: float | None = None,
                 rng: np.random.Generator | None = None):
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.hidden_dim = hidden_dim
        self.lr = lr
        self.gamma = gamma
        self.tau_soft = tau_soft
        self.batch_size = batch_size
        self.action_scale = action_scale
        self.target_entropy = (-float(action_dim) if target_entropy is None
                               else float(target_entropy))
        if rng is None:
            rng = np.random.default_rng(0)
        self._noise = rng

        init_rng = np.random.default_rng(rng.integers(2 ** 63))
        self.actor = GaussianActor(state_dim, action_dim, hidden_dim, init_rng)
        self.q1 = QCritic(state_dim, action_dim, hidden_dim, init_rng, "q1")
        self.q2 = QCritic(state_dim, action_dim, hidden_dim, init_rng, "q2")
        self.q1_target = QCritic(state_dim, action_dim, hidden_dim, init_rng, "q1t")
        self.q2_target = QCritic(state_dim, action_dim, hidden_dim, init_rng, "q2t")
        self._copy_into(self.q1, self.q1_target)
        self._copy_into(self.q2, self.q2_target)
        # Signed entropy multiplier (dual variable of the H >= target
        # constraint).  It may cross zero so the tuner can pull entropy DOWN
        # to the target as well as up; the temperature used in critic targets
        # and reported as alpha_ent is its positive part.
        self.entropy_coef = Tensor(np.ones(1), requires_grad=True)

        self.actor_opt = AdamState(self.actor.params, lr=lr)
        self.q1_opt = AdamState(self.q1.params, lr=lr)
        self.q2_opt = AdamState(self.q2.params, lr=lr)
        self.alpha_opt = AdamState({"entropy_coef": self.entropy_coef}, lr=lr)
        self.k_proportional = 0.1
        self._last_drive = 0.0
        self.buffer = ReplayBuffer(buffer_capacity)

    # ------------------------------------------------------------- plumbing

    @staticmethod
    def _copy_into(src: QCritic, dst: QCritic) -> None:
        for name, p in src.params.items():
            dst.params[name.replace(src.name, dst.name, 1)].data = p.data.copy()

    @property
    def alpha_ent(self) -> float:
        """Temperature for the soft value target: positive part of the dual."""
        return float(max(self.entropy_coef.data[0], 1e-8))

    def set_learning_rate(self, lr: float) -> None:
        for opt in (self.actor_opt, self.q1_opt, self.q2_opt, self.alpha_opt):
            opt.lr = lr

    def parameters(self) -> dict[str, Tensor]:
        out = {}
        for net in (self.actor, self.q1, self.q2, self.q1_target, self.q2_target):
            out.update(net.params)
        out["entropy_coef"] = self.entropy_coef
        return out

    # -------------------------------------------------------------- policy

    def _squashed(self, states: Tensor, noise: np.ndarray):
        """Reparameterized action tensor and its log probability.

        The policy's random variable is the unit squash tanh(u); the +-0.1
        output scale is a fixed deterministic mapping applied afterwards and
        kept out of the density, so the -dim(a) entropy target is attainable.
        """
        mu, log_std = self.actor.forward(states)
        std = exp(log_std)
        eps = Tensor(noise)
        u = add(mu, multiply(std, eps))
        action = multiply(Tensor(self.action_scale), tanh(u))
        # log N(u) = -0.5 eps^2 - log_std - 0.5 log 2pi, per dimension
        gauss = multiply(Tensor(-0.5), square(eps))
        gauss = sub(gauss, log_std)
        gauss = sub(gauss, Tensor(0.5 * LOG_2PI))
        # log |d tanh(u)/du| = 2(log 2 - u - softplus(-2u))
        correction = multiply(Tensor(2.0),
                              sub(sub(Tensor(LOG_2), u),
                                  softplus(multiply(Tensor(-2.0), u))))
        log_prob = tsum(sub(gauss, correction), axis=-1, keepdims=True)
        return action, log_prob

    def sample_action(self, state: np.ndarray, mode: str = "stochastic"):
        """One action for one state; returns (action, log_prob)."""
        state = np.asarray(state, dtype=np.float64)
        if not np.all(np.isfinite(state)):
            raise NumericError("non-finite controller state")
        states = Tensor(state[None, :])
        if mode == "deterministic":
            mu, _ = self.actor.forward(states)
            action = self.action_scale * np.tanh(mu.data[0])
            return action, None
        noise = self._noise.normal(size=(1, self.action_dim))
        action, log_prob = self._squashed(states, noise)
        return action.data[0].copy(), float(log_prob.data[0, 0])

    def log_prob_of_noise(self, state: np.ndarray, noise: np.ndarray) -> np.ndarray:
        """log pi for given pre-squash noise draws (Monte-Carlo checks)."""
        states = Tensor(np.repeat(np.asarray(state, dtype=np.float64)[None, :],
                                  noise.shape[0], axis=0))
        _, log_prob = self._squashed(states, noise)
        return log_prob.data[:, 0].copy()

    # ------------------------------------------------------------- updates

    def update(self, batch: dict) -> SacDiagnostics:
        for key, arr in batch.items():
            if not np.all(np.isfinite(arr)):
                raise NumericError(f"batch field {key!r} contains non-finite values")
        s = Tensor(batch["states"])
        a = Tensor(batch["actions"])
        r = batch["rewards"][:, None]
        s2 = Tensor(batch["next_states"])
        not_done = 1.0 - batch["dones"][:, None]
        n = batch["states"].shape[0]

        # TD target from freshly sampled next actions and target critics
        noise2 = self._noise.normal(size=(n, self.action_dim))
        a2, logp2 = self._squashed(s2, noise2)
        q1t = self.q1_target.forward(s2, a2).data
        q2t = self.q2_target.forward(s2, a2).data
        q_min = np.minimum(q1t, q2t)
        y = r + self.gamma * not_done * (q_min - self.alpha_ent * logp2.data)

        critic_losses = []
        for critic, opt in ((self.q1, self.q1_opt), (self.q2, self.q2_opt)):
            with Tape() as tape:
                q = critic.forward(s, a)
                loss = tmean(square(sub(q, Tensor(y))))
            grads = backward(tape, loss, params=critic.params.values())
            adam_step(critic.params, {k: grads[p] for k, p in critic.params.items()},
                      opt)
            critic_losses.append(float(loss.data))

        # actor: maximize min-Q minus the entropy multiplier times log pi.
        # The multiplier is the integral dual plus a proportional term on the
        # last entropy error; without the P-term the (dual, entropy) pair is a
        # double integrator and oscillates instead of settling at the target.
        noise_pi = self._noise.normal(size=(n, self.action_dim))
        coef = float(self.entropy_coef.data[0]) + self.k_proportional * self._last_drive
        with Tape() as tape:
            a_new, logp = self._squashed(s, noise_pi)
            q1n = self.q1.forward(s, a_new)
            q2n = self.q2.forward(s, a_new)
            pick1 = (q1n.data <= q2n.data).astype(np.float64)
            q_pi = add(multiply(q1n, Tensor(pick1)),
                       multiply(q2n, Tensor(1.0 - pick1)))
            actor_loss = tmean(sub(multiply(Tensor(coef), logp), q_pi))
        grads = backward(tape, actor_loss, params=self.actor.params.values())
        adam_step(self.actor.params,
                  {k: grads[p] for k, p in self.actor.params.items()},
                  self.actor_opt)

        # dual step on -coef * (log pi + target entropy), log pi detached.
        # Plain (non-adaptive) gradient descent: the integral action must be
        # proportional to the entropy error or the dual rings around zero.
        drive = float(np.mean(logp.data) + self.target_entropy)
        self._last_drive = drive
        self.entropy_coef.data += self.alpha_opt.lr * drive
        self.alpha_opt.step += 1

        self.soft_update_targets()
        return SacDiagnostics(
            critic1_loss=critic_losses[0], critic2_loss=critic_losses[1],
            actor_loss=float(actor_loss.data), alpha_ent=self.alpha_ent,
            entropy_estimate=float(-np.mean(logp.data)),
            target_mean=float(np.mean(y)))

    def soft_update_targets(self) -> None:
        for online, target in ((self.q1, self.q1_target), (self.q2, self.q2_target)):
            for name, p in online.params.items():
                t = target.params[name.replace(online.name, target.name, 1)]
                t.data *= 1.0 - self.tau_soft
                t.data += self.tau_soft * p.data


def run_controller_training(controller: SacController, env, epochs: int,
                            steps_per_epoch: int, warmup: int = 256,
                            diagnostics_path=None, log=None) -> dict:
    """Generic SAC training loop against an environment object.

    The env contract: `state()` returns the current state vector;
    `step(action)` applies the action, advances one day, and returns
    (reward, next_state); `tau` and `alpha` attributes expose the current
    settings for the diagnostics stream.
    """
    writer = None
    handle = None
    if diagnostics_path is not None:
        handle = open(diagnostics_path, "w", newline="")
        writer = csv.writer(handle)
        writer.writerow(["step", "reward", "critic1_loss", "critic2_loss",
                         "actor_loss", "alpha_ent", "tau", "alpha_blend"])
    rewards = []
    epoch_means = []
    step_count = 0
    try:
        for epoch in range(epochs):
            epoch_rewards = []
            for _ in range(steps_per_epoch):
                state = env.state()
                action, _ = controller.sample_action(state)
                reward, next_state = env.step(action)
                controller.buffer.add(state, action, reward, next_state, False)
                diag = None
                if len(controller.buffer) >= max(warmup, controller.batch_size):
                    batch = controller.buffer.sample(controller.batch_size,
                                                     controller._noise)
                    diag = controller.update(batch)
                step_count += 1
                rewards.append(reward)
                epoch_rewards.append(reward)
                if writer is not None:
                    writer.writerow([
                        step_count, f"{reward:.8f}",
                        "" if diag is None else f"{diag.critic1_loss:.8f}",
                        "" if diag is None else f"{diag.critic2_loss:.8f}",
                        "" if diag is None else f"{diag.actor_loss:.8f}",
                        f"{controller.alpha_ent:.8f}",
                        f"{getattr(env, 'tau', float('nan')):.8f}",
                        f"{getattr(env, 'alpha', float('nan')):.8f}"])
            epoch_means.append(float(np.mean(epoch_rewards)))
            if log is not None:
                log(f"sac epoch {epoch + 1}/{epochs} "
                    f"mean_reward={epoch_means[-1]:.5f} "
                    f"alpha_ent={controller.alpha_ent:.4f}")
    finally:
        if handle is not None:
            handle.close()
    return {"rewards": np.asarray(rewards), "epoch_mean_reward": epoch_means,
            "steps": step_count}
