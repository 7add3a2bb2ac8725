import numpy as np
import pytest

from regimecast.errors import ConfigError
from regimecast.synthgen import SynthConfig, generate


def test_same_seed_bit_identical():
    a = generate(SynthConfig(n_stocks=4, n_days=200, seed=3))
    b = generate(SynthConfig(n_stocks=4, n_days=200, seed=3))
    np.testing.assert_array_equal(a.panel.close, b.panel.close)
    np.testing.assert_array_equal(a.panel.vix, b.panel.vix)
    np.testing.assert_array_equal(a.panel.sentiment, b.panel.sentiment)
    np.testing.assert_array_equal(a.regimes, b.regimes)


@pytest.mark.parametrize("field,value", [
    ("sigma_calm", 0.012),
    ("p_calm_to_crisis", 0.03),
    ("drift_calm", 0.001),
    ("sentiment_coupling", 0.8),
    ("earnings_jump", 0.05),
])
def test_changing_config_scalar_changes_panel(field, value):
    base = generate(SynthConfig(n_stocks=4, n_days=300, seed=5))
    changed = generate(SynthConfig(n_stocks=4, n_days=300, seed=5,
                                   **{field: value}))
    assert not np.array_equal(base.panel.close, changed.panel.close) or \
        not np.array_equal(base.panel.sentiment, changed.panel.sentiment) or \
        not np.array_equal(base.regimes, changed.regimes)


def test_single_regime_gbm_vol_calibration():
    cfg = SynthConfig(n_stocks=4, n_days=2000, seed=7,
                      crisis_vol_multiplier=1.0, p_calm_to_crisis=0.0)
    synth = generate(cfg)
    close = synth.panel.close
    logret = np.log(close[1:] / close[:-1])
    realized = logret.std(axis=0)
    assert np.all(np.abs(realized / cfg.sigma_calm - 1.0) < 0.10)
    assert synth.regimes.sum() == 0


def test_crisis_days_move_more_at_k5():
    cfg = SynthConfig(n_stocks=4, n_days=2000, seed=8, crisis_vol_multiplier=5.0)
    synth = generate(cfg)
    close = synth.panel.close
    absret = np.abs(np.log(close[1:] / close[:-1])).mean(axis=1)
    crisis = synth.regimes[1:] == 1
    assert crisis.sum() > 30
    ratio = absret[crisis].mean() / absret[~crisis].mean()
    assert ratio > 2.0


def test_panel_invariants_hold():
    synth = generate(SynthConfig(n_stocks=6, n_days=500, seed=9))
    p = synth.panel
    assert np.all(p.high >= np.maximum(p.open, p.close) - 1e-9)
    assert np.all(p.low <= np.minimum(p.open, p.close) + 1e-9)
    assert np.all(p.volume >= 0)
    assert np.all(p.post_velocity >= 0)
    assert np.all(np.abs(p.sentiment) <= 1.0)


def test_transition_frequencies_match_config():
    cfg = SynthConfig(n_stocks=2, n_days=8000, n_sectors=2, seed=10,
                      p_calm_to_crisis=0.02, p_crisis_to_calm=0.12)
    synth = generate(cfg)
    r = synth.regimes
    calm_days = np.flatnonzero(r[:-1] == 0)
    crisis_days = np.flatnonzero(r[:-1] == 1)
    p_cx = (r[calm_days + 1] == 1).mean()
    p_xc = (r[crisis_days + 1] == 0).mean()
    assert abs(p_cx - cfg.p_calm_to_crisis) < 0.02
    assert abs(p_xc - cfg.p_crisis_to_calm) < 0.02


def test_config_validation():
    with pytest.raises(ConfigError):
        SynthConfig(p_calm_to_crisis=1.5).validate()
    with pytest.raises(ConfigError):
        SynthConfig(n_sectors=9, n_stocks=4).validate()
    with pytest.raises(ConfigError):
        SynthConfig(crisis_vol_multiplier=0.5).validate()


def test_earnings_calendar_spacing_and_flags():
    synth = generate(SynthConfig(n_stocks=3, n_days=400, seed=11))
    days_by_stock = {}
    for t, i, surprise in synth.panel.earnings:
        days_by_stock.setdefault(i, []).append(t)
        assert synth.event_flags[t, i]
    for days in days_by_stock.values():
        gaps = np.diff(days)
        assert np.all(gaps == 63)
