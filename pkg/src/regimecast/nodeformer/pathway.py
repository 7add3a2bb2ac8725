"""Graph-biased transformer pathway over (stock, time) tokens.

Tokens are laid out time-major (token = t * n_stocks + i) over a window of
length T.  Attention logits receive two additive biases: a causal mask of
-1e9 wherever the key's time exceeds the query's, and log(E_ij + 1e-6) from
the stock-edge matrix, so E acts as a multiplicative attention prior.  Layer
0 uses the static initialization e0; each layer's final-time-step node
representations refine the matrix for the next layer.  Sublayers follow the
attention -> dropout -> residual -> layer-norm order, twice per layer.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, DimensionError
from ..numcore import (
    Tensor,
    add,
    concat,
    dropout,
    gather,
    layer_norm,
    linear,
    log,
    matmul,
    multiply,
    relu,
    reshape,
    sigmoid,
    slice_axis,
    softmax,
    tile,
    transpose,
)
from ..regime import uniform_init

CAUSAL_PENALTY = -1e9
EDGE_LOG_EPS = 1e-6
CONTEXT_DIM = 12
REGIME_LEVELS = 3
REGIME_EMBED_DIM = 4


@dataclass
class PathwayConfig:
    variant: str                     # "normal" or "event"
    n_stocks: int
    feature_dim: int = 17
    extra_dim: int = 0               # appended regime signal (single-path ablation)
    d_model: int = 512
    n_layers: int = 6
    n_heads: int = 8
    d_ff: int = 2048
    dropout: float = 0.1
    stock_embed_dim: int = 16
    horizons: tuple = (1, 5, 20)
    seq_len: int = 252

    def __post_init__(self):
        if self.variant not in ("normal", "event"):
            raise ConfigError(f"unknown pathway variant {self.variant!r}")
        if self.d_model % self.n_heads:
            raise ConfigError("d_model must divide evenly into heads")

    @property
    def context_dim(self) -> int:
        return CONTEXT_DIM if self.variant == "event" else 0

    @property
    def token_feature_dim(self) -> int:
        return self.feature_dim + self.extra_dim + self.context_dim

    @property
    def input_width(self) -> int:
        return self.token_feature_dim + self.d_model + self.stock_embed_dim


@dataclass
class PathwayOutput:
    price: np.ndarray                # (B, N, H) final-step predictions
    direction: np.ndarray            # (B, N, H) up-move probabilities
    edges: np.ndarray | None         # (B, N, N) last refined matrix (L > 1)
    price_t: Tensor | None = None    # tensors kept alive for training
    direction_t: Tensor | None = None
    all_step_price: np.ndarray | None = None   # (B, T, N, H) when requested


class PathwayModel:
    """One pathway: parameters plus the token-transformer forward pass."""

    def __init__(self, config: PathwayConfig, rng: np.random.Generator):
        self.config = config
        c = config
        d, ff = c.d_model, c.d_ff
        p: dict[str, Tensor] = {}
        p["stock_embed"] = Tensor(uniform_init(rng, (c.n_stocks, c.stock_embed_dim)),
                                  requires_grad=True)
        p["w_in"] = Tensor(uniform_init(rng, (c.input_width, d)), requires_grad=True)
        p["b_in"] = Tensor(np.zeros(d), requires_grad=True)
        p["w_edge"] = Tensor(uniform_init(rng, (2 * d, 1)).reshape(2 * d),
                             requires_grad=True)
        p["b_edge"] = Tensor(np.zeros(1), requires_grad=True)
        if c.variant == "event":
            p["regime_table"] = Tensor(
                uniform_init(rng, (REGIME_LEVELS, REGIME_EMBED_DIM)),
                requires_grad=True)
        for i in range(c.n_layers):
            pre = f"layers.{i}."
            for name in ("wq", "wk", "wv", "wo"):
                p[pre + name] = Tensor(uniform_init(rng, (d, d)), requires_grad=True)
                p[pre + name.replace("w", "b")] = Tensor(np.zeros(d),
                                                         requires_grad=True)
            p[pre + "ffn_w1"] = Tensor(uniform_init(rng, (d, ff)), requires_grad=True)
            p[pre + "ffn_b1"] = Tensor(np.zeros(ff), requires_grad=True)
            p[pre + "ffn_w2"] = Tensor(uniform_init(rng, (ff, d)), requires_grad=True)
            p[pre + "ffn_b2"] = Tensor(np.zeros(d), requires_grad=True)
            p[pre + "ln1_g"] = Tensor(np.ones(d), requires_grad=True)
            p[pre + "ln1_b"] = Tensor(np.zeros(d), requires_grad=True)
            p[pre + "ln2_g"] = Tensor(np.ones(d), requires_grad=True)
            p[pre + "ln2_b"] = Tensor(np.zeros(d), requires_grad=True)
        n_h = len(c.horizons)
        p["w_price"] = Tensor(uniform_init(rng, (d, n_h)), requires_grad=True)
        p["b_price"] = Tensor(np.zeros(n_h), requires_grad=True)
        p["w_dir"] = Tensor(uniform_init(rng, (d, n_h)), requires_grad=True)
        p["b_dir"] = Tensor(np.zeros(n_h), requires_grad=True)
        self.params = p
        self._mask_cache: dict[tuple[int, int], np.ndarray] = {}

    def parameter_count(self) -> int:
        return sum(p.size for p in self.params.values())

    def _causal_mask(self, seq: int, n: int) -> np.ndarray:
        key = (seq, n)
        cached = self._mask_cache.get(key)
        if cached is None:
            times = np.repeat(np.arange(seq), n)
            cached = np.where(times[None, :] > times[:, None], CAUSAL_PENALTY, 0.0)
            self._mask_cache[key] = cached
        return cached

    def forward(self, features: np.ndarray, edge_init: np.ndarray,
                context: np.ndarray | None = None,
                regime_labels: np.ndarray | None = None,
                train: bool = False,
                dropout_rng: np.random.Generator | None = None,
                collect_all_steps: bool = False,
                keep_tensors: bool = False) -> PathwayOutput:
        """Run the pathway on a batch of windows.

        features:      (B, T, N, feature_dim + extra_dim), already normalized
        edge_init:     (N, N) static matrix for layer 0
        context:       (B, T, N, 8) continuous context (event variant only)
        regime_labels: (B, T) int tercile labels (event variant only)
        """
        c = self.config
        p = self.params
        feats = np.asarray(features, dtype=np.float64)
        if feats.ndim != 4:
            raise DimensionError("features must be (batch, time, stock, feature)")
        batch, seq, n, width = feats.shape
        if n != c.n_stocks:
            raise DimensionError(f"expected {c.n_stocks} stocks, got {n}")
        if width != c.feature_dim + c.extra_dim:
            raise DimensionError(
                f"expected {c.feature_dim + c.extra_dim} features, got {width}")
        if seq > c.seq_len:
            raise DimensionError(f"window of {seq} exceeds configured {c.seq_len}")
        if c.variant == "normal" and (context is not None or regime_labels is not None):
            raise ConfigError("context supplied to the normal variant")
        if c.variant == "event" and (context is None or regime_labels is None):
            raise ConfigError("event variant requires context and regime labels")
        if train and c.dropout > 0.0 and dropout_rng is None:
            raise ConfigError("training with dropout needs a dropout stream")

        s_tok = seq * n
        x = reshape(Tensor(feats), (batch, s_tok, width))
        pieces = [x]
        if c.variant == "event":
            labels = np.asarray(regime_labels, dtype=np.intp).reshape(batch * seq)
            r = gather(p["regime_table"], labels)                    # (B*T, 4)
            r = reshape(r, (batch, seq, 1, REGIME_EMBED_DIM))
            r = tile(r, (1, 1, n, 1))
            pieces.append(reshape(r, (batch, s_tok, REGIME_EMBED_DIM)))
            ctx = np.asarray(context, dtype=np.float64)
            if ctx.shape != (batch, seq, n, 8):
                raise DimensionError(
                    f"context must be (B, T, N, 8), got {ctx.shape}")
            pieces.append(Tensor(ctx.reshape(batch, s_tok, 8)))

        te = temporal_tokens(seq, n, c.d_model)
        pieces.append(Tensor(np.broadcast_to(te, (batch, s_tok, c.d_model)).copy()))
        emb = tile(p["stock_embed"], (seq, 1))                        # (T*N, d_s)
        emb = tile(reshape(emb, (1, s_tok, c.stock_embed_dim)), (batch, 1, 1))
        pieces.append(emb)

        h = linear(concat(pieces, axis=-1), p["w_in"], p["b_in"])

        causal = Tensor(self._causal_mask(seq, n))
        e0_bias = Tensor(self._causal_mask(seq, n)
                         + np.tile(np.log(np.asarray(edge_init) + EDGE_LOG_EPS),
                                   (seq, seq)))
        edges_t: Tensor | None = None

        for layer in range(c.n_layers):
            pre = f"layers.{layer}."
            if layer == 0:
                bias = e0_bias
            else:
                # refined edges are indexed by the QUERY's time step, so the
                # bias a token sees never encodes information from its future
                log_e = log(add(edges_time, Tensor(EDGE_LOG_EPS)))
                flat = reshape(log_e, (batch, s_tok, n))
                bias = add(causal, tile(flat, (1, 1, seq)))
            h = transformer_layer(h, bias, p, pre, c.n_heads,
                                  rate=c.dropout if train else 0.0,
                                  rng=dropout_rng)

            if layer < c.n_layers - 1:
                w1 = reshape(slice_axis(p["w_edge"], axis=0, start=0, stop=c.d_model),
                             (c.d_model, 1))
                w2 = reshape(slice_axis(p["w_edge"], axis=0, start=c.d_model,
                                        stop=2 * c.d_model), (c.d_model, 1))
                u = reshape(matmul(h, w1), (batch, seq, n, 1))
                vv = reshape(matmul(h, w2), (batch, seq, 1, n))
                edges_time = sigmoid(add(add(u, vv), p["b_edge"]))  # (B,T,N,N)
                edges_t = reshape(
                    slice_axis(edges_time, axis=1, start=seq - 1, stop=seq),
                    (batch, n, n))

        final = slice_axis(h, axis=1, start=(seq - 1) * n, stop=s_tok)
        price_t = linear(final, p["w_price"], p["b_price"])
        dir_t = sigmoid(linear(final, p["w_dir"], p["b_dir"]))
        out = PathwayOutput(
            price=price_t.data.copy(),
            direction=dir_t.data.copy(),
            edges=None if edges_t is None else edges_t.data.copy(),
            price_t=price_t if keep_tensors else None,
            direction_t=dir_t if keep_tensors else None,
        )
        if collect_all_steps:
            every = linear(h, p["w_price"], p["b_price"])
            out.all_step_price = every.data.reshape(batch, seq, n,
                                                    len(c.horizons)).copy()
        return out


def transformer_layer(h: Tensor, bias: Tensor, params: dict[str, Tensor],
                      prefix: str, n_heads: int, rate: float = 0.0,
                      rng: np.random.Generator | None = None) -> Tensor:
    """One full layer: biased multi-head attention and FFN sublayers, each
    followed by dropout, a residual add, and layer normalization."""
    d_model = params[prefix + "wq"].shape[-1]
    if d_model % n_heads:
        raise DimensionError("d_model must divide evenly into heads")
    d_k = d_model // n_heads
    inv_sqrt = Tensor(1.0 / np.sqrt(d_k))
    q = linear(h, params[prefix + "wq"], params[prefix + "bq"])
    k = linear(h, params[prefix + "wk"], params[prefix + "bk"])
    v = linear(h, params[prefix + "wv"], params[prefix + "bv"])
    head_outs = []
    for head in range(n_heads):
        lo, hi = head * d_k, (head + 1) * d_k
        # scale q before the big matmul: cheaper than scaling the score matrix
        qh = multiply(slice_axis(q, axis=-1, start=lo, stop=hi), inv_sqrt)
        kh = slice_axis(k, axis=-1, start=lo, stop=hi)
        vh = slice_axis(v, axis=-1, start=lo, stop=hi)
        scores = add(matmul(qh, transpose(kh)), bias)
        head_outs.append(matmul(softmax(scores), vh))
    attn = linear(concat(head_outs, axis=-1),
                  params[prefix + "wo"], params[prefix + "bo"])
    if rate > 0.0:
        attn = dropout(attn, rate, rng)
    h = add(h, attn)
    h = add(multiply(layer_norm(h), params[prefix + "ln1_g"]),
            params[prefix + "ln1_b"])

    f = linear(relu(linear(h, params[prefix + "ffn_w1"], params[prefix + "ffn_b1"])),
               params[prefix + "ffn_w2"], params[prefix + "ffn_b2"])
    if rate > 0.0:
        f = dropout(f, rate, rng)
    h = add(h, f)
    return add(multiply(layer_norm(h), params[prefix + "ln2_g"]),
               params[prefix + "ln2_b"])


def attention_bias(edge_matrix: np.ndarray, seq: int) -> np.ndarray:
    """Causal mask plus log-domain edge bias, expanded over time-major tokens."""
    n = edge_matrix.shape[0]
    times = np.repeat(np.arange(seq), n)
    causal = np.where(times[None, :] > times[:, None], CAUSAL_PENALTY, 0.0)
    return causal + np.tile(np.log(np.asarray(edge_matrix) + EDGE_LOG_EPS),
                            (seq, seq))


def temporal_tokens(seq: int, n: int, d: int) -> np.ndarray:
    from .encoding import temporal_encoding_matrix
    te = temporal_encoding_matrix(seq, d)
    return np.repeat(te, n, axis=0)


def blend(y_normal, y_event, alpha: float):
    """Convex combination: alpha * normal + (1 - alpha) * event."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"blend weight must lie in [0, 1], got {alpha}")
    y_normal = np.asarray(y_normal, dtype=np.float64)
    y_event = np.asarray(y_event, dtype=np.float64)
    return alpha * y_normal + (1.0 - alpha) * y_event


def gated_blend(y_normal, y_event, event_routed, alpha: float):
    """System prediction: normal-routed samples take the normal pathway's
    output; event-routed samples take the alpha-blend of both pathways."""
    blended = blend(y_normal, y_event, alpha)
    routed = np.asarray(event_routed, dtype=bool)
    if routed.ndim == y_normal.ndim - 1:
        routed = routed[..., None]
    return np.where(routed, blended, y_normal)
