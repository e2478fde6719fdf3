"""
Feed-forward tanh regression network from standardized 2D landmarks to depth.

Samples are rows: layer l maps a (m × d) activation matrix to
tanh(a @ W.T + b) with W of shape (r × d). Gradients are exact and analytic.
"""
import logging
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from reconstructor.errors import LengthMismatch, InvariantViolation

logger = logging.getLogger(__name__)

DEFAULT_HIDDEN_LAYERS = 4
LOSS_EPSILON = 1e-12
TARGET_CLAMP = 0.999


@dataclass
class NetworkParams:
    """Layer weights and biases, also used as the gradient container"""
    weights: List[np.ndarray]
    biases: List[np.ndarray]

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise LengthMismatch("Network needs one bias per weight matrix and at least one layer")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if b.shape != (w.shape[0],):
                raise LengthMismatch(f"Layer {l}: bias {b.shape} does not match weights {w.shape}")
            if l and w.shape[1] != self.weights[l - 1].shape[0]:
                raise LengthMismatch(f"Layer {l} expects {w.shape[1]} inputs, previous layer gives {self.weights[l - 1].shape[0]}")

    @property
    def dims(self) -> List[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def n(self) -> int:
        return self.dims[-1]

    def arrays(self) -> List[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out

    def with_arrays(self, arrays: Sequence[np.ndarray]) -> 'NetworkParams':
        return NetworkParams(weights=list(arrays[0::2]), biases=list(arrays[1::2]))

    def copy(self) -> 'NetworkParams':
        return self.with_arrays([a.copy() for a in self.arrays()])

    def zeros_like(self) -> 'NetworkParams':
        return self.with_arrays([np.zeros_like(a) for a in self.arrays()])


@dataclass
class RmsPropState:
    """Per-parameter running mean of squared gradients"""
    mean_square: List[np.ndarray]
    learning_rate: float = 0.01
    decay: float = 0.9
    epsilon: float = 1e-8

    def __post_init__(self):
        if self.epsilon <= 0:
            raise InvariantViolation(f"RMSProp epsilon must be positive, got {self.epsilon}")
        if not 0.0 < self.decay < 1.0:
            raise InvariantViolation(f"RMSProp decay must lie in (0, 1), got {self.decay}")
        if self.learning_rate <= 0:
            raise InvariantViolation(f"Learning rate must be positive, got {self.learning_rate}")

    @classmethod
    def for_params(cls, params, learning_rate: float = 0.01, decay: float = 0.9,
                   epsilon: float = 1e-8) -> 'RmsPropState':
        return cls([np.zeros_like(a) for a in params.arrays()], learning_rate, decay, epsilon)


def network_dims(n: int, hidden_layers: int = DEFAULT_HIDDEN_LAYERS) -> List[int]:
    """[2n, 2n, ..., 2n, n] with hidden_layers hidden layers"""
    return [2 * n] * (hidden_layers + 1) + [n]


def init_layers(dims: Sequence[int], rng: np.random.Generator) -> Tuple[List[np.ndarray], List[np.ndarray]]:
    """Uniform weights in ±sqrt(6 / (d + r)), zero biases"""
    weights, biases = [], []
    for d, r in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / (d + r))
        weights.append(rng.uniform(-limit, limit, size=(r, d)))
        biases.append(np.zeros(r))
    return weights, biases


def init_network(n: int, seed: int, hidden_layers: int = DEFAULT_HIDDEN_LAYERS) -> NetworkParams:
    if n < 3:
        raise InvariantViolation(f"Network needs at least 3 landmarks, got {n}")
    weights, biases = init_layers(network_dims(n, hidden_layers), np.random.default_rng(seed))
    return NetworkParams(weights, biases)


def _as_batch(values, width: int, name: str) -> Tuple[np.ndarray, bool]:
    values = np.asarray(values, dtype=np.float64)
    single = values.ndim == 1
    batch = values[None, :] if single else values
    if batch.ndim != 2 or batch.shape[1] != width:
        raise LengthMismatch(f"{name} has shape {values.shape}, expected rows of length {width}")
    return batch, single


def forward(params: NetworkParams, inputs) -> Tuple[np.ndarray, List[np.ndarray]]:
    """
    Run the network on one input vector or a matrix of input rows.

    Returns the output (same rank as inputs) and every layer's activation,
    starting with the input, for backpropagation.
    """
    a, single = _as_batch(inputs, params.dims[0], 'input')
    activations = [a]
    for w, b in zip(params.weights, params.biases):
        a = np.tanh(a @ w.T + b)
        activations.append(a)
    return (a[0] if single else a), activations


def loss(predictions, targets) -> float:
    """Sum over samples of the Euclidean distance between prediction and target"""
    predictions = np.atleast_2d(np.asarray(predictions, dtype=np.float64))
    targets = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    if predictions.shape != targets.shape:
        raise LengthMismatch(f"predictions {predictions.shape} and targets {targets.shape} differ")
    return float(np.linalg.norm(targets - predictions, axis=1).sum())


def loss_gradient(predictions: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """d/da of sum_i ||z_i - a_i||, zero where the residual vanishes"""
    residual = targets - predictions
    norms = np.linalg.norm(residual, axis=1, keepdims=True)
    return -residual / np.maximum(norms, LOSS_EPSILON)


def backward_from_output(params: NetworkParams, activations: List[np.ndarray],
                         grad_output: np.ndarray) -> Tuple[NetworkParams, np.ndarray]:
    """Backpropagate an output gradient; returns parameter and input gradients"""
    weights, biases = [], []
    grad = grad_output
    for l in range(len(params.weights) - 1, -1, -1):
        a_out = activations[l + 1]
        delta = grad * (1.0 - a_out ** 2)
        weights.append(delta.T @ activations[l])
        biases.append(delta.sum(axis=0))
        grad = delta @ params.weights[l]
    return NetworkParams(weights[::-1], biases[::-1]), grad


def backward(params: NetworkParams, batch_inputs, batch_targets) -> NetworkParams:
    """Gradient of the summed Euclidean loss with respect to every weight and bias"""
    inputs, _ = _as_batch(batch_inputs, params.dims[0], 'batch_inputs')
    targets, _ = _as_batch(batch_targets, params.n, 'batch_targets')
    if len(inputs) != len(targets) or not len(inputs):
        raise LengthMismatch(f"Batch needs matching nonzero sample counts, got {len(inputs)} and {len(targets)}")
    predictions, activations = forward(params, inputs)
    grads, _ = backward_from_output(params, activations, loss_gradient(predictions, targets))
    return grads


def rmsprop_step(params, gradients, state: RmsPropState):
    """
    One RMSProp update.

    Works on any parameter container exposing arrays() / with_arrays();
    returns new params and state, the inputs are left untouched.
    """
    values, grads = params.arrays(), gradients.arrays()
    if len(values) != len(grads) or len(values) != len(state.mean_square):
        raise LengthMismatch("Parameters, gradients and optimizer state disagree")
    new_values, new_ms = [], []
    for theta, g, ms in zip(values, grads, state.mean_square):
        if theta.shape != g.shape:
            raise LengthMismatch(f"Gradient shape {g.shape} does not match parameter shape {theta.shape}")
        ms = state.decay * ms + (1.0 - state.decay) * g * g
        new_values.append(theta - state.learning_rate * g / (np.sqrt(ms) + state.epsilon))
        new_ms.append(ms)
    new_state = RmsPropState(new_ms, state.learning_rate, state.decay, state.epsilon)
    return params.with_arrays(new_values), new_state


def clamp_targets(targets: np.ndarray) -> np.ndarray:
    """Keep depth targets inside the tanh range"""
    outside = np.abs(targets) > TARGET_CLAMP
    count = int(outside.sum())
    if count:
        logger.warning(f"Clamped {count} depth targets outside ±{TARGET_CLAMP}")
        targets = np.clip(targets, -TARGET_CLAMP, TARGET_CLAMP)
    return targets
