"""Soft Actor-Critic meta-controller over (tau, alpha)."""

from .networks import GaussianActor, QCritic
from .replay import ReplayBuffer
from .sac import (
    LAMBDA_DIR,
    LAMBDA_STABLE,
    SacController,
    SacDiagnostics,
    apply_action,
    build_state,
    compute_reward,
    run_controller_training,
)

__all__ = [
    "GaussianActor",
    "LAMBDA_DIR",
    "LAMBDA_STABLE",
    "QCritic",
    "ReplayBuffer",
    "SacController",
    "SacDiagnostics",
    "apply_action",
    "build_state",
    "compute_reward",
    "run_controller_training",
]
