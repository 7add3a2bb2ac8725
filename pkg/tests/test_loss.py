import numpy as np
import pytest

from regimecast.nodeformer import composite_loss, true_direction
from regimecast.numcore import Tape, Tensor, backward, finite_difference_check


def test_true_direction_indicator():
    now = np.array([10.0, 10.0, 10.0])
    future = np.array([11.0, 9.0, 10.0])
    np.testing.assert_array_equal(true_direction(now, future), [1.0, 0.0, 0.0])


def test_perfect_predictions_give_near_zero_loss():
    preds = Tensor(np.array([[[1.0, 2.0]]]))
    probs = Tensor(np.array([[[1.0, 0.0]]]))     # confident and right
    targets = preds.data.copy()
    directions = np.array([[[1.0, 0.0]]])
    mask = np.ones((1, 1))
    loss = composite_loss(preds, probs, targets, directions, mask, params={})
    # only the clipped BCE residual remains: -log(1 - 1e-7)
    assert float(loss.data) == pytest.approx(0.5 * 1e-7, rel=1e-2)


def test_uninformative_probability_costs_ln2():
    preds = Tensor(np.zeros((1, 2, 3)))
    probs = Tensor(np.full((1, 2, 3), 0.5))
    targets = np.zeros((1, 2, 3))
    directions = np.ones((1, 2, 3))
    mask = np.ones((1, 2))
    loss = composite_loss(preds, probs, targets, directions, mask, params={},
                          lambda_mse=0.0, lambda_reg=0.0, lambda_dir=1.0)
    assert float(loss.data) == pytest.approx(np.log(2.0), rel=1e-12)


def test_l2_term_hand_computed_on_three_parameters():
    params = {
        "a": Tensor(np.array([1.0]), requires_grad=True),
        "b": Tensor(np.array([2.0]), requires_grad=True),
        "c": Tensor(np.array([-3.0]), requires_grad=True),
    }
    preds = Tensor(np.zeros((1, 1, 1)))
    probs = Tensor(np.full((1, 1, 1), 0.5))
    loss = composite_loss(preds, probs, np.zeros((1, 1, 1)), np.zeros((1, 1, 1)),
                          np.ones((1, 1)), params,
                          lambda_mse=0.0, lambda_dir=0.0)
    assert float(loss.data) == pytest.approx(1e-4 * (1 + 4 + 9), rel=1e-12)


def test_mask_excludes_unsupervised_samples():
    preds = Tensor(np.array([[[0.0], [100.0]]]))
    probs = Tensor(np.full((1, 2, 1), 0.5))
    targets = np.zeros((1, 2, 1))
    directions = np.zeros((1, 2, 1))
    mask = np.array([[1.0, 0.0]])    # second stock unsupervised
    loss = composite_loss(preds, probs, targets, directions, mask, params={},
                          lambda_dir=0.0, lambda_reg=0.0)
    assert float(loss.data) == pytest.approx(0.0, abs=1e-15)


def test_empty_mask_rejected():
    preds = Tensor(np.zeros((1, 1, 1)))
    probs = Tensor(np.full((1, 1, 1), 0.5))
    with pytest.raises(ValueError):
        composite_loss(preds, probs, np.zeros((1, 1, 1)), np.zeros((1, 1, 1)),
                       np.zeros((1, 1)), params={})


def test_composite_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    w = Tensor(rng.normal(scale=0.5, size=(4, 3)), requires_grad=True)
    b = Tensor(np.zeros(3), requires_grad=True)
    wd = Tensor(rng.normal(scale=0.5, size=(4, 3)), requires_grad=True)
    x = rng.normal(size=(5, 4))
    targets = rng.normal(size=(1, 5, 3))
    directions = (rng.random((1, 5, 3)) > 0.5).astype(float)
    mask = np.ones((1, 5))
    params = {"w": w, "b": b, "wd": wd}

    def loss_fn():
        from regimecast.numcore import linear, reshape, sigmoid
        pred = reshape(linear(Tensor(x), w, b), (1, 5, 3))
        prob = sigmoid(reshape(linear(Tensor(x), wd, b), (1, 5, 3)))
        return composite_loss(pred, prob, targets, directions, mask, params)

    report = finite_difference_check(loss_fn, params, rtol=1e-3)
    assert report.all_passed, report.summary()


def test_default_lambdas_match_stated_values():
    from regimecast.nodeformer.loss import LAMBDA_DIR, LAMBDA_MSE, LAMBDA_REG
    assert LAMBDA_MSE == 1.0
    assert LAMBDA_DIR == 0.5
    assert LAMBDA_REG == 1e-4
