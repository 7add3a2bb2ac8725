import numpy as np
import pytest

from regimecast.errors import ConfigError, DimensionError, LeakageError
from regimecast.nodeformer import (
    CONTEXT_DIM,
    PathwayConfig,
    PathwayModel,
    attention_bias,
    blend,
    gated_blend,
    init_edges,
    refine_edges,
    temporal_encoding,
    transformer_layer,
)
from regimecast.numcore import Tensor, backward, Tape, finite_difference_check


def desk_config(variant="normal", **kw):
    defaults = dict(variant=variant, n_stocks=3, feature_dim=5, d_model=16,
                    n_layers=2, n_heads=4, d_ff=32, dropout=0.0,
                    stock_embed_dim=4, horizons=(1, 5), seq_len=16)
    defaults.update(kw)
    return PathwayConfig(**defaults)


def make_inputs(rng, config, batch=2, seq=8):
    feats = rng.normal(size=(batch, seq, config.n_stocks,
                             config.feature_dim + config.extra_dim))
    e0 = np.full((config.n_stocks, config.n_stocks), 0.5)
    np.fill_diagonal(e0, 1.0)
    if config.variant == "event":
        ctx = rng.normal(size=(batch, seq, config.n_stocks, 8)) * 0.3
        labels = rng.integers(0, 3, size=(batch, seq))
        return feats, e0, ctx, labels
    return feats, e0, None, None


# ---------------------------------------------------------------- encoding

def test_temporal_encoding_at_zero():
    te = temporal_encoding(0, 8)
    np.testing.assert_array_equal(te[0::2], np.zeros(4))
    np.testing.assert_array_equal(te[1::2], np.ones(4))


def test_temporal_encoding_first_pair_is_sin_t():
    for t in (1, 5, 17):
        assert temporal_encoding(t, 8)[0] == pytest.approx(np.sin(t))


def test_temporal_encoding_period_grows_with_k():
    d = 16
    wavelengths = [10000 ** (2 * k / d) for k in range(d // 2)]
    assert all(a < b for a, b in zip(wavelengths, wavelengths[1:]))
    # bounded in [-1, 1]
    te = temporal_encoding(12345, d)
    assert np.all(np.abs(te) <= 1.0)


# ------------------------------------------------------------------- edges

def test_init_edges_arithmetic():
    sectors = np.array([0, 0, 1])
    rng = np.random.default_rng(0)
    base = rng.normal(size=200)
    # stock0 and stock1: identical -> rho 1; stock2 crafted via mixing
    returns = np.stack([base, base, -0.5 * base + rng.normal(size=200)], axis=1)
    e0 = init_edges(sectors, returns, np.arange(200), train_end=200)
    assert e0[0, 1] == pytest.approx(1.0)          # same sector, rho = 1
    assert e0.shape == (3, 3)
    np.testing.assert_allclose(e0, e0.T)
    np.testing.assert_array_equal(np.diag(e0), np.ones(3))
    assert np.all((e0 >= 0.0) & (e0 <= 1.0))


def test_init_edges_clips_negative_and_scales_positive_correlation():
    sectors = np.array([0, 1])
    t = np.linspace(0, 4 * np.pi, 300)
    a = np.sin(t)
    for rho_target, expected in ((-0.5, 0.0), (0.6, 0.3)):
        b = rho_target * a + np.sqrt(1 - rho_target ** 2) * np.cos(t)
        returns = np.stack([a, b], axis=1)
        e0 = init_edges(sectors, returns, np.arange(300), train_end=300)
        rho = np.corrcoef(a, b)[0, 1]
        assert e0[0, 1] == pytest.approx(0.5 * max(0.0, rho), abs=1e-12)
        if rho_target < 0:
            assert e0[0, 1] == 0.0
        else:
            assert e0[0, 1] == pytest.approx(expected, abs=0.02)


def test_init_edges_leakage_guard():
    with pytest.raises(LeakageError):
        init_edges(np.array([0, 1]), np.zeros((10, 2)), np.arange(10), train_end=5)


def test_refine_edges_zero_params_give_half():
    w = Tensor(np.zeros(8), requires_grad=True)
    b = Tensor(np.zeros(1), requires_grad=True)
    out = refine_edges(np.ones(4), np.ones(4), w, b)
    assert out.data.reshape(()) == pytest.approx(0.5)


def test_refine_edges_monotone_in_bias():
    w = Tensor(np.zeros(8))
    h = np.ones(4)
    values = [refine_edges(h, h, w, Tensor(np.array([b]))).data.item()
              for b in (-5.0, 0.0, 5.0, 50.0)]
    assert all(a < b for a, b in zip(values, values[1:]))
    assert values[-1] > 0.999999


def test_refine_edges_gradient_matches_finite_differences():
    rng = np.random.default_rng(1)
    w = Tensor(rng.normal(scale=0.4, size=8), requires_grad=True)
    b = Tensor(rng.normal(size=1), requires_grad=True)
    hi, hj = rng.normal(size=4), rng.normal(size=4)

    def loss_fn():
        from regimecast.numcore import tsum
        return tsum(refine_edges(hi, hj, w, b))

    report = finite_difference_check(loss_fn, {"w_e": w, "b_e": b}, rtol=1e-4)
    assert report.all_passed, report.summary()


# --------------------------------------------------------------- attention

def _layer_params(rng, d, ff):
    p = {}
    for name in ("wq", "wk", "wv", "wo"):
        p["L." + name] = Tensor(rng.normal(scale=0.3, size=(d, d)), requires_grad=True)
        p["L." + name.replace("w", "b")] = Tensor(rng.normal(scale=0.05, size=d),
                                                  requires_grad=True)
    p["L.ffn_w1"] = Tensor(rng.normal(scale=0.3, size=(d, ff)), requires_grad=True)
    p["L.ffn_b1"] = Tensor(np.zeros(ff), requires_grad=True)
    p["L.ffn_w2"] = Tensor(rng.normal(scale=0.3, size=(ff, d)), requires_grad=True)
    p["L.ffn_b2"] = Tensor(np.zeros(d), requires_grad=True)
    p["L.ln1_g"] = Tensor(np.ones(d), requires_grad=True)
    p["L.ln1_b"] = Tensor(np.zeros(d), requires_grad=True)
    p["L.ln2_g"] = Tensor(np.ones(d), requires_grad=True)
    p["L.ln2_b"] = Tensor(np.zeros(d), requires_grad=True)
    return p


def _reference_layer(x, bias, p, n_heads):
    """Independent straight-line re-implementation of one layer."""
    d = x.shape[-1]
    d_k = d // n_heads

    def lin(v, w, b):
        return v @ p["L." + w].data + p["L." + b].data

    q, k, v = lin(x, "wq", "bq"), lin(x, "wk", "bk"), lin(x, "wv", "bv")
    heads = []
    for hd in range(n_heads):
        qh = q[:, hd * d_k:(hd + 1) * d_k]
        kh = k[:, hd * d_k:(hd + 1) * d_k]
        vh = v[:, hd * d_k:(hd + 1) * d_k]
        scores = qh @ kh.T / np.sqrt(d_k) + bias
        scores = scores - scores.max(axis=1, keepdims=True)
        weights = np.exp(scores)
        weights = weights / weights.sum(axis=1, keepdims=True)
        heads.append(weights @ vh)
    attn = np.concatenate(heads, axis=1) @ p["L.wo"].data + p["L.bo"].data
    h = x + attn
    mu = h.mean(axis=1, keepdims=True)
    var = h.var(axis=1, keepdims=True)
    h = (h - mu) / np.sqrt(var + 1e-5) * p["L.ln1_g"].data + p["L.ln1_b"].data
    f = np.maximum(h @ p["L.ffn_w1"].data + p["L.ffn_b1"].data, 0.0)
    f = f @ p["L.ffn_w2"].data + p["L.ffn_b2"].data
    h2 = h + f
    mu = h2.mean(axis=1, keepdims=True)
    var = h2.var(axis=1, keepdims=True)
    return (h2 - mu) / np.sqrt(var + 1e-5) * p["L.ln2_g"].data + p["L.ln2_b"].data


def test_attention_layer_matches_reference():
    # 2 stocks x 3 steps, d_model = 4, seeded params
    rng = np.random.default_rng(2)
    n, seq, d = 2, 3, 4
    p = _layer_params(rng, d, 8)
    e = np.array([[1.0, 0.6], [0.6, 1.0]])
    bias = attention_bias(e, seq)
    x = rng.normal(size=(seq * n, d))
    mine = transformer_layer(Tensor(x), Tensor(bias), p, "L.", n_heads=2)
    expected = _reference_layer(x, bias, p, n_heads=2)
    np.testing.assert_allclose(mine.data, expected, rtol=0, atol=1e-10)


def test_single_stock_uniform_edges_reduce_to_plain_causal_attention():
    # constant bias across allowed pairs shifts softmax by nothing
    rng = np.random.default_rng(3)
    seq, d = 5, 4
    p = _layer_params(rng, d, 8)
    x = rng.normal(size=(seq, d))
    bias_with_edges = attention_bias(np.array([[1.0]]), seq)
    causal_only = np.where(np.arange(seq)[None, :] > np.arange(seq)[:, None],
                           -1e9, 0.0)
    a = transformer_layer(Tensor(x), Tensor(bias_with_edges), p, "L.", n_heads=2)
    b = transformer_layer(Tensor(x), Tensor(causal_only), p, "L.", n_heads=2)
    np.testing.assert_allclose(a.data, b.data, rtol=0, atol=1e-12)


def test_attention_gradients_match_finite_differences():
    # single attention layer at d_model = 8
    rng = np.random.default_rng(4)
    n, seq, d = 2, 3, 8
    p = _layer_params(rng, d, 16)
    bias = attention_bias(np.full((n, n), 0.8), seq)
    x = rng.normal(size=(seq * n, d))
    proj = rng.normal(size=(seq * n, d))

    def loss_fn():
        from regimecast.numcore import multiply, tsum
        out = transformer_layer(Tensor(x), Tensor(bias), p, "L.", n_heads=2)
        return tsum(multiply(out, Tensor(proj)))

    report = finite_difference_check(loss_fn, p, rtol=1e-4, max_elements=12,
                                     rng=np.random.default_rng(5))
    assert report.all_passed, report.summary()


# ----------------------------------------------------------------- pathway

def test_zero_head_outputs_equal_head_bias():
    rng = np.random.default_rng(6)
    config = desk_config()
    model = PathwayModel(config, rng)
    model.params["w_price"].data[...] = 0.0
    model.params["b_price"].data[...] = [1.5, -2.0]
    feats, e0, _, _ = make_inputs(rng, config)
    out = model.forward(feats, e0)
    np.testing.assert_allclose(out.price[..., 0], 1.5, rtol=0, atol=1e-12)
    np.testing.assert_allclose(out.price[..., 1], -2.0, rtol=0, atol=1e-12)


def test_causality_future_perturbations_change_nothing():
    rng = np.random.default_rng(7)
    config = desk_config()
    model = PathwayModel(config, rng)
    feats, e0, _, _ = make_inputs(rng, config, batch=1, seq=8)
    base = model.forward(feats, e0, collect_all_steps=True).all_step_price
    diffs = 0
    for trial in range(100):
        t_perturb = rng.integers(1, 8)
        stock = rng.integers(0, config.n_stocks)
        feat = rng.integers(0, config.feature_dim)
        bumped = feats.copy()
        bumped[0, t_perturb, stock, feat] += rng.normal() * 5.0
        out = model.forward(bumped, e0, collect_all_steps=True).all_step_price
        delta = np.abs(out[0, :t_perturb] - base[0, :t_perturb]).max()
        assert delta == 0.0
        diffs += int(np.abs(out[0, t_perturb:] - base[0, t_perturb:]).max() > 0)
    assert diffs == 100  # perturbations do reach their own time step


def test_full_pathway_gradcheck_desk_scale():
    rng = np.random.default_rng(8)
    config = desk_config(n_layers=2, d_model=16, n_stocks=3)
    model = PathwayModel(config, rng)
    feats, e0, _, _ = make_inputs(rng, config, batch=1, seq=8)
    proj = rng.normal(size=(1, 3, 2))

    def loss_fn():
        from regimecast.numcore import multiply, tsum
        out = model.forward(feats, e0, keep_tensors=True)
        return tsum(multiply(out.price_t, Tensor(proj)))

    report = finite_difference_check(loss_fn, model.params, rtol=1e-3,
                                     max_elements=6,
                                     rng=np.random.default_rng(9))
    assert report.all_passed, report.summary()


def test_event_pathway_parameter_count_relation():
    rng = np.random.default_rng(10)
    normal = PathwayModel(desk_config("normal"), rng)
    event = PathwayModel(desk_config("event"), rng)
    d_model = normal.config.d_model
    expected_extra = CONTEXT_DIM * d_model + 12
    assert event.parameter_count() - normal.parameter_count() == expected_extra


def test_variant_mismatch_errors():
    rng = np.random.default_rng(11)
    config = desk_config("normal")
    model = PathwayModel(config, rng)
    feats, e0, _, _ = make_inputs(rng, config)
    ctx = np.zeros((2, 8, 3, 8))
    with pytest.raises(ConfigError):
        model.forward(feats, e0, context=ctx, regime_labels=np.zeros((2, 8), int))
    event_model = PathwayModel(desk_config("event"), rng)
    with pytest.raises(ConfigError):
        event_model.forward(feats, e0)


def test_event_forward_consumes_context():
    rng = np.random.default_rng(12)
    config = desk_config("event")
    model = PathwayModel(config, rng)
    feats, e0, ctx, labels = make_inputs(rng, config)
    out = model.forward(feats, e0, context=ctx, regime_labels=labels)
    ctx2 = ctx.copy()
    ctx2[0, -1] += 1.0
    out2 = model.forward(feats, e0, context=ctx2, regime_labels=labels)
    assert np.abs(out.price[0] - out2.price[0]).max() > 0.0


def test_permutation_equivariance_with_uniform_edges():
    rng = np.random.default_rng(13)
    config = desk_config("normal", n_stocks=3)
    model = PathwayModel(config, rng)
    feats, _, _, _ = make_inputs(rng, config, batch=1, seq=6)
    e0 = np.full((3, 3), 1.0)
    out = model.forward(feats, e0).price
    # swap stocks 0 and 1 everywhere the model distinguishes them
    perm = [1, 0, 2]
    feats_p = feats[:, :, perm, :]
    model.params["stock_embed"].data = model.params["stock_embed"].data[perm]
    out_p = model.forward(feats_p, e0).price
    model.params["stock_embed"].data = model.params["stock_embed"].data[perm]
    np.testing.assert_allclose(out_p[:, perm, :], out, rtol=0, atol=1e-10)


def test_window_longer_than_configured_rejected():
    rng = np.random.default_rng(14)
    config = desk_config(seq_len=4)
    model = PathwayModel(config, rng)
    feats, e0, _, _ = make_inputs(rng, config, seq=8)
    with pytest.raises(DimensionError):
        model.forward(feats, e0)


def test_dropout_requires_stream_and_perturbs_training_pass():
    rng = np.random.default_rng(15)
    config = desk_config(dropout=0.1)
    model = PathwayModel(config, rng)
    feats, e0, _, _ = make_inputs(rng, config)
    with pytest.raises(ConfigError):
        model.forward(feats, e0, train=True)
    out1 = model.forward(feats, e0, train=True,
                         dropout_rng=np.random.default_rng(1)).price
    out2 = model.forward(feats, e0, train=True,
                         dropout_rng=np.random.default_rng(1)).price
    out3 = model.forward(feats, e0).price
    np.testing.assert_array_equal(out1, out2)   # same stream state, same mask
    assert np.abs(out1 - out3).max() > 0


# ------------------------------------------------------------------- blend

def test_blend_degenerate_weights():
    y_n = np.array([10.0])
    y_e = np.array([20.0])
    np.testing.assert_array_equal(blend(y_n, y_e, 1.0), y_n)
    np.testing.assert_array_equal(blend(y_n, y_e, 0.0), y_e)
    assert blend(y_n, y_e, 0.5)[0] == pytest.approx(15.0)


def test_blend_convexity_property():
    rng = np.random.default_rng(16)
    for _ in range(200):
        y_n = rng.normal(size=4)
        y_e = rng.normal(size=4)
        alpha = rng.random()
        out = blend(y_n, y_e, alpha)
        lo = np.minimum(y_n, y_e) - 1e-12
        hi = np.maximum(y_n, y_e) + 1e-12
        assert np.all(out >= lo) and np.all(out <= hi)


def test_blend_rejects_out_of_range_alpha():
    with pytest.raises(ValueError):
        blend(np.zeros(1), np.zeros(1), 1.2)


def test_gated_blend_routes_per_stock():
    y_n = np.array([[1.0, 1.0], [2.0, 2.0]])   # (stocks=2, horizons=2)
    y_e = np.array([[5.0, 5.0], [6.0, 6.0]])
    routed = np.array([False, True])
    out = gated_blend(y_n, y_e, routed, alpha=0.25)
    np.testing.assert_allclose(out[0], [1.0, 1.0])
    np.testing.assert_allclose(out[1], 0.25 * 2.0 + 0.75 * 6.0)
