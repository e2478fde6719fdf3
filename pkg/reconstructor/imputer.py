"""
Recurrent imputation of missing standardized 2D landmarks, and the joint
network that merges the imputed 2D coordinates with the predicted depths.

Vectors follow the interleaved layout (u1, v1, ..., un, vn). A missing
coordinate c is re-estimated at every step as g(sum_k W[k, c] d_k) from the
previous iterate; observed coordinates are carried forward unchanged.
"""
import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from reconstructor.errors import InvariantViolation, LengthMismatch
from reconstructor.geometry import Landmarks2D
from reconstructor.net import NetworkParams, backward_from_output, forward, init_layers

logger = logging.getLogger(__name__)

ACTIVATIONS = ('identity', 'tanh')
LAMBDA_TOLERANCE = 1e-9


def linear_lambda(tau: int) -> Tuple[float, ...]:
    """(1, 2, ..., tau) normalized to sum to one"""
    total = tau * (tau + 1) / 2
    return tuple((s + 1) / total for s in range(tau))


@dataclass
class ImputerParams:
    weights: np.ndarray
    tau: int = 3
    lambda_weights: Optional[Tuple[float, ...]] = None
    activation: str = 'identity'

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.ndim != 2 or self.weights.shape[0] != self.weights.shape[1] or self.weights.shape[0] % 2:
            raise LengthMismatch(f"Imputer weights must be 2n×2n, got {self.weights.shape}")
        if self.tau < 1:
            raise InvariantViolation(f"tau must be >= 1, got {self.tau}")
        if self.lambda_weights is None:
            self.lambda_weights = linear_lambda(self.tau)
        lam = np.asarray(self.lambda_weights, dtype=np.float64)
        if lam.shape != (self.tau,):
            raise InvariantViolation(f"lambda_weights needs {self.tau} entries, got {lam.size}")
        if lam[0] <= 0 or np.any(np.diff(lam) <= 0):
            raise InvariantViolation(f"lambda_weights must be positive and strictly increasing: {tuple(lam)}")
        if abs(lam.sum() - 1.0) > LAMBDA_TOLERANCE:
            raise InvariantViolation(f"lambda_weights must sum to 1, got {lam.sum()}")
        if self.activation not in ACTIVATIONS:
            raise InvariantViolation(f"Unknown activation '{self.activation}', expected one of {ACTIVATIONS}")
        self.lambda_weights = tuple(float(x) for x in lam)

    @property
    def n(self) -> int:
        return self.weights.shape[0] // 2

    def arrays(self):
        return [self.weights]

    def with_arrays(self, arrays: Sequence[np.ndarray]) -> 'ImputerParams':
        return ImputerParams(arrays[0], self.tau, self.lambda_weights, self.activation)

    def copy(self) -> 'ImputerParams':
        return self.with_arrays([self.weights.copy()])


@dataclass
class JointParams:
    """Imputer and depth network optimized together"""
    imputer: ImputerParams
    net: NetworkParams

    def arrays(self):
        return self.imputer.arrays() + self.net.arrays()

    def with_arrays(self, arrays: Sequence[np.ndarray]) -> 'JointParams':
        return JointParams(self.imputer.with_arrays(arrays[:1]), self.net.with_arrays(arrays[1:]))

    def copy(self) -> 'JointParams':
        return JointParams(self.imputer.copy(), self.net.copy())


def init_imputer(n: int, rng: np.random.Generator, tau: int = 3,
                 lambda_weights: Optional[Sequence[float]] = None,
                 activation: str = 'identity') -> ImputerParams:
    weights, _ = init_layers([2 * n, 2 * n], rng)
    return ImputerParams(weights[0], tau, None if lambda_weights is None else tuple(lambda_weights), activation)


def coordinate_mask(mask: np.ndarray) -> np.ndarray:
    """Per-landmark mask (..., n) to per-coordinate mask (..., 2n)"""
    return np.repeat(np.asarray(mask, dtype=bool), 2, axis=-1)


def build_input(landmarks: Landmarks2D) -> np.ndarray:
    """d0: standardized interleaved coordinates with missing entries zero"""
    return np.where(coordinate_mask(landmarks.mask), landmarks.interleaved(), 0.0)


def _activate(params: ImputerParams, pre: np.ndarray) -> np.ndarray:
    return np.tanh(pre) if params.activation == 'tanh' else pre


def _check(params: ImputerParams, d0, mask) -> Tuple[np.ndarray, np.ndarray, bool]:
    d0 = np.asarray(d0, dtype=np.float64)
    single = d0.ndim == 1
    d0 = np.atleast_2d(d0)
    observed = np.atleast_2d(coordinate_mask(mask))
    if d0.shape[1] != 2 * params.n or observed.shape != d0.shape:
        raise LengthMismatch(f"d0 {d0.shape} and mask do not match an imputer for n={params.n}")
    return d0, observed, single


def _unroll(params: ImputerParams, d0: np.ndarray, observed: np.ndarray):
    steps, pre_activations = [d0], []
    for _ in range(params.tau):
        pre = steps[-1] @ params.weights
        pre_activations.append(pre)
        steps.append(np.where(observed, steps[-1], _activate(params, pre)))
    blended = sum(lam * d for lam, d in zip(params.lambda_weights, steps[1:]))
    # observed entries bypass the blend so they stay bit-exact
    return np.where(observed, d0, blended), steps, pre_activations


def impute(params: ImputerParams, d0, mask) -> np.ndarray:
    """Fill missing coordinates; accepts one vector or a batch of rows"""
    d0, observed, single = _check(params, d0, mask)
    d, _, _ = _unroll(params, d0, observed)
    return d[0] if single else d


def forward_joint(imputer: ImputerParams, net: NetworkParams, d0, mask) -> np.ndarray:
    """Imputed 2D coordinates (interleaved) followed by predicted depths"""
    if net.dims[0] != 2 * imputer.n:
        raise LengthMismatch(f"Network expects {net.dims[0]} inputs, imputer produces {2 * imputer.n}")
    d0, observed, single = _check(imputer, d0, mask)
    d, _, _ = _unroll(imputer, d0, observed)
    depth, _ = forward(net, d)
    output = np.hstack([d, depth])
    return output[0] if single else output


def _residual(output, truth, depth_weight: float) -> np.ndarray:
    output = np.atleast_2d(np.asarray(output, dtype=np.float64))
    truth = np.atleast_2d(np.asarray(truth, dtype=np.float64))
    if output.shape != truth.shape or output.shape[1] % 3:
        raise LengthMismatch(f"output {output.shape} and truth {truth.shape} must be matching 3n rows")
    residual = output - truth
    split = 2 * output.shape[1] // 3
    residual[:, split:] *= depth_weight
    return residual


def joint_loss(output, truth, depth_weight: float = 1.0) -> float:
    """Sum over samples of the Euclidean norm of the full 3n residual"""
    return float(np.linalg.norm(_residual(output, truth, depth_weight), axis=1).sum())


def joint_backward(imputer: ImputerParams, net: NetworkParams, d0, mask, truth,
                   depth_weight: float = 1.0, epsilon: float = 1e-12) -> Tuple[float, JointParams]:
    """Joint loss and its gradient through the network and the unrolled recursion"""
    d0, observed, _ = _check(imputer, d0, mask)
    d, steps, pre_activations = _unroll(imputer, d0, observed)
    depth, activations = forward(net, d)
    residual = _residual(np.hstack([d, depth]), truth, depth_weight)
    norms = np.linalg.norm(residual, axis=1, keepdims=True)
    grad_out = residual / np.maximum(norms, epsilon)

    split = d.shape[1]
    net_grads, grad_input = backward_from_output(net, activations, depth_weight * grad_out[:, split:])
    missing = ~observed
    grad_d = (grad_out[:, :split] + grad_input) * missing

    grad_w = np.zeros_like(imputer.weights)
    delta_next = None
    for s in range(imputer.tau, 0, -1):
        grad = imputer.lambda_weights[s - 1] * grad_d
        if delta_next is not None:
            grad = grad + (delta_next @ imputer.weights.T) * missing
        if imputer.activation == 'tanh':
            grad = grad * (1.0 - np.tanh(pre_activations[s - 1]) ** 2)
        grad_w += steps[s - 1].T @ grad
        delta_next = grad

    total = float(norms.sum())
    return total, JointParams(imputer.with_arrays([grad_w]), net_grads)
