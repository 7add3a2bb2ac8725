"""Regime-aware stock forecasting at desk scale.

Autoencoder anomaly gating, dual graph-biased transformer pathways with
adaptive blending, and a Soft Actor-Critic meta-controller over the routing
threshold and blending weight, validated on a seeded synthetic market.
"""

__version__ = "0.1.0"
