"""Dual graph-biased transformer pathways with adaptive blending."""

from .context import (
    EventContext,
    EventContextBuilder,
    build_event_context,
    tercile_label,
    vix_terciles,
)
from .encoding import temporal_encoding, temporal_encoding_matrix
from .graph import init_edges, refine_edges
from .loss import composite_loss, true_direction
from .pathway import (
    CONTEXT_DIM,
    PathwayConfig,
    PathwayModel,
    PathwayOutput,
    attention_bias,
    blend,
    gated_blend,
    transformer_layer,
)

__all__ = [
    "CONTEXT_DIM",
    "EventContext",
    "EventContextBuilder",
    "PathwayConfig",
    "PathwayModel",
    "PathwayOutput",
    "attention_bias",
    "blend",
    "build_event_context",
    "composite_loss",
    "gated_blend",
    "init_edges",
    "refine_edges",
    "temporal_encoding",
    "temporal_encoding_matrix",
    "tercile_label",
    "transformer_layer",
    "true_direction",
    "vix_terciles",
]
