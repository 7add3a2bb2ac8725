import numpy as np
import pytest

from regimecast.errors import DimensionError
from regimecast.numcore import AdamState, Tensor, adam_step


def test_zero_gradient_leaves_params_unchanged():
    p = Tensor(np.array([1.0, -2.0]), requires_grad=True)
    state = AdamState({"p": p}, lr=0.1)
    before = p.data.copy()
    adam_step({"p": p}, {"p": np.zeros(2)}, state)
    np.testing.assert_array_equal(p.data, before)
    assert state.step == 1
    np.testing.assert_array_equal(state.m["p"], np.zeros(2))


def test_moments_decay_toward_zero_under_zero_gradient():
    p = Tensor(np.array([1.0]), requires_grad=True)
    state = AdamState({"p": p}, lr=0.0)
    adam_step({"p": p}, {"p": np.array([4.0])}, state)
    m1 = state.m["p"].copy()
    adam_step({"p": p}, {"p": np.array([0.0])}, state)
    assert abs(state.m["p"][0]) < abs(m1[0])


def test_first_step_moves_against_gradient_sign_at_lr_scale():
    g = np.array([3.0, -0.25, 1e-4])
    p = Tensor(np.zeros(3), requires_grad=True)
    lr = 0.05
    state = AdamState({"p": p}, lr=lr)
    adam_step({"p": p}, {"p": g.copy()}, state)
    # bias-corrected first step: -lr * g / (|g| + eps) ~= -lr * sign(g)
    np.testing.assert_allclose(p.data, -lr * np.sign(g), rtol=1e-3)


def test_step_counter_strictly_increments():
    p = Tensor(np.zeros(1), requires_grad=True)
    state = AdamState({"p": p})
    for k in range(1, 6):
        adam_step({"p": p}, {"p": np.ones(1)}, state)
        assert state.step == k


def test_shape_mismatch_rejected():
    p = Tensor(np.zeros(2), requires_grad=True)
    state = AdamState({"p": p})
    with pytest.raises(DimensionError):
        adam_step({"p": p}, {"p": np.zeros(3)}, state)


def test_quadratic_converges_in_200_steps():
    # direct run of the scalar recurrence on f(w) = (w - 2)^2
    w = Tensor(np.array([0.0]), requires_grad=True)
    state = AdamState({"w": w}, lr=0.05)
    for _ in range(200):
        grad = 2.0 * (w.data - 2.0)
        adam_step({"w": w}, {"w": grad}, state)
    assert abs(w.data[0] - 2.0) < 0.05


def test_determinism():
    def run():
        p = Tensor(np.array([1.0, 2.0]), requires_grad=True)
        state = AdamState({"p": p}, lr=0.01)
        rng = np.random.default_rng(11)
        for _ in range(50):
            adam_step({"p": p}, {"p": rng.normal(size=2)}, state)
        return p.data.copy()

    np.testing.assert_array_equal(run(), run())
