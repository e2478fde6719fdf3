import logging

import numpy as np
import pytest

from reconstructor.errors import InvariantViolation, LengthMismatch
from reconstructor.net import (
    NetworkParams,
    RmsPropState,
    TARGET_CLAMP,
    backward,
    clamp_targets,
    forward,
    init_network,
    loss,
    loss_gradient,
    network_dims,
    rmsprop_step,
)


def test_network_dims_default_architecture():
    assert network_dims(5) == [10, 10, 10, 10, 10, 5]
    assert network_dims(4, hidden_layers=1) == [8, 8, 4]


def test_init_is_deterministic_and_bounded():
    first, second = init_network(6, seed=3), init_network(6, seed=3)
    for a, b in zip(first.arrays(), second.arrays()):
        assert np.array_equal(a, b)

    for w, b in zip(first.weights, first.biases):
        assert np.abs(w).max() <= np.sqrt(6.0 / sum(w.shape))
        assert not b.any()
    assert not np.array_equal(first.weights[0], init_network(6, seed=4).weights[0])


def test_init_needs_three_landmarks():
    with pytest.raises(InvariantViolation):
        init_network(2, seed=0)


def test_forward_single_matches_batch(rng):
    params = init_network(5, seed=1)
    batch = rng.normal(size=(4, 10))
    out, activations = forward(params, batch)

    assert out.shape == (4, 5)
    assert len(activations) == len(params.weights) + 1
    assert np.allclose(forward(params, batch[2])[0], out[2], rtol=0.0, atol=1e-12)
    assert np.all(np.abs(out) < 1.0)


def test_forward_rejects_wrong_width():
    with pytest.raises(LengthMismatch):
        forward(init_network(5, seed=1), np.zeros(9))


def test_loss_is_sum_of_euclidean_norms():
    predictions = np.zeros((2, 2))
    targets = np.array([[3.0, 4.0], [0.0, 1.0]])
    assert loss(predictions, targets) == 6.0


def test_loss_gradient_vanishes_at_zero_residual():
    grad = loss_gradient(np.ones((1, 3)), np.ones((1, 3)))
    assert np.all(np.isfinite(grad))
    assert not grad.any()


@pytest.mark.parametrize('seed', range(20))
def test_backward_matches_finite_differences(seed, numeric_gradient):
    rng = np.random.default_rng(seed)
    n = 5
    params = init_network(n, seed=seed, hidden_layers=2)
    inputs = rng.normal(size=(10, 2 * n))
    targets = rng.uniform(-0.9, 0.9, size=(10, n))

    analytic = backward(params, inputs, targets).arrays()
    numeric = numeric_gradient(lambda: loss(forward(params, inputs)[0], targets), params.arrays())

    flat_a = np.concatenate([g.ravel() for g in analytic])
    flat_n = np.concatenate([g.ravel() for g in numeric])
    relative = np.linalg.norm(flat_a - flat_n) / np.linalg.norm(flat_a + flat_n)
    assert relative < 1e-5


def test_backward_rejects_mismatched_batch():
    params = init_network(3, seed=0)
    with pytest.raises(LengthMismatch):
        backward(params, np.zeros((4, 6)), np.zeros((3, 3)))


def test_rmsprop_first_step():
    params = init_network(3, seed=0, hidden_layers=0)
    grads = params.with_arrays([np.full_like(a, 2.0) for a in params.arrays()])
    state = RmsPropState.for_params(params, learning_rate=0.1)
    before = [a.copy() for a in params.arrays()]

    updated, new_state = rmsprop_step(params, grads, state)

    # mean square 0.1 * 4 = 0.4, step 0.1 * 2 / (sqrt(0.4) + 1e-8)
    step = 0.1 * 2.0 / (np.sqrt(0.4) + 1e-8)
    for old, new, ms in zip(before, updated.arrays(), new_state.mean_square):
        assert np.allclose(new, old - step)
        assert np.allclose(ms, 0.4)
    for old, current in zip(before, params.arrays()):
        assert np.array_equal(old, current)
    assert not state.mean_square[0].any()


def test_one_unit_network_is_tanh():
    params = NetworkParams([np.array([[1.0]])], [np.zeros(1)])
    out, _ = forward(params, np.array([0.5]))
    assert out[0] == pytest.approx(0.46212, abs=1e-5)


def test_batch_gradient_is_sum_of_sample_gradients(rng):
    params = init_network(4, seed=3)
    inputs = rng.normal(size=(2, 8))
    targets = rng.uniform(-0.9, 0.9, size=(2, 4))

    joint = backward(params, inputs, targets).arrays()
    first = backward(params, inputs[:1], targets[:1]).arrays()
    second = backward(params, inputs[1:], targets[1:]).arrays()
    for g, g0, g1 in zip(joint, first, second):
        assert np.allclose(g, g0 + g1, atol=1e-12)


@pytest.mark.parametrize('seed', range(100))
def test_small_rmsprop_step_lowers_sample_loss(seed):
    rng = np.random.default_rng(seed)
    params = init_network(5, seed=seed, hidden_layers=1)
    x = rng.normal(size=10)
    z = rng.uniform(-0.9, 0.9, size=5)
    before = loss(forward(params, x)[0], z)

    grads = backward(params, x, z)
    updated, _ = rmsprop_step(params, grads, RmsPropState.for_params(params, learning_rate=1e-4))

    assert loss(forward(updated, x)[0], z) < before


def test_zero_gradient_only_decays_mean_square():
    params = init_network(3, seed=0, hidden_layers=1)
    state = RmsPropState([np.full_like(a, 0.5) for a in params.arrays()])

    updated, new_state = rmsprop_step(params, params.zeros_like(), state)

    for old, new in zip(params.arrays(), updated.arrays()):
        assert np.array_equal(old, new)
    for ms in new_state.mean_square:
        assert np.allclose(ms, 0.9 * 0.5)


def test_rmsprop_rejects_bad_hyperparameters():
    with pytest.raises(InvariantViolation):
        RmsPropState([], epsilon=0.0)
    with pytest.raises(InvariantViolation):
        RmsPropState([], decay=1.0)


def test_rmsprop_checks_gradient_shapes():
    params = init_network(3, seed=0)
    other = init_network(4, seed=0)
    with pytest.raises(LengthMismatch):
        rmsprop_step(params, other, RmsPropState.for_params(params))


def test_clamp_targets_warns(caplog):
    targets = np.array([[0.5, 1.2, -3.0]])
    with caplog.at_level(logging.WARNING, logger='reconstructor.net'):
        clamped = clamp_targets(targets)

    assert clamped.tolist() == [[0.5, TARGET_CLAMP, -TARGET_CLAMP]]
    assert 'Clamped 2 depth targets' in caplog.text
