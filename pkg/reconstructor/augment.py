"""
Training-set augmentation: random 3D rotations, weak-perspective views,
standardization, Gaussian landmark noise and simulated missing landmarks.
"""
import logging
from dataclasses import dataclass
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np

from config.settings import AugmentationConfig
from reconstructor.errors import EmptyDataset, HeterogeneousLandmarkCount, InvariantViolation
from reconstructor.geometry import (
    MIN_LANDMARKS,
    EulerAngles,
    Landmarks2D,
    Shape3D,
    WeakPerspectiveCamera,
    project_weak_perspective,
    rotate_shape,
    standardize_2d,
    standardize_3d,
)
from reconstructor.imputer import coordinate_mask

logger = logging.getLogger(__name__)

__all__ = [
    'AugmentationConfig',
    'EpochBatch',
    'sample_rotation',
    'sample_camera',
    'object_size',
    'add_landmark_noise',
    'sample_missing_mask',
    'make_epoch_batch',
    'expand_validation',
]


@dataclass
class EpochBatch:
    """
    One augmented copy of a shape collection.

    inputs:   (m, 2n) standardized interleaved 2D landmarks, noise applied,
              zero at missing landmarks
    targets:  (m, n) standardized depths
    mask:     (m, n) observed flags
    uv_truth: (m, 2n) noise-free standardized 2D landmarks, all present
    """
    inputs: np.ndarray
    targets: np.ndarray
    mask: np.ndarray
    uv_truth: np.ndarray

    def __len__(self) -> int:
        return len(self.inputs)

    def __iter__(self) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
        return iter(zip(self.inputs, self.targets))

    @property
    def n(self) -> int:
        return self.targets.shape[1]

    @property
    def has_missing(self) -> bool:
        return not self.mask.all()

    def joint_truth(self) -> np.ndarray:
        """(û, v̂) interleaved then ẑ; observed entries match the inputs"""
        uv = np.where(coordinate_mask(self.mask), self.inputs, self.uv_truth)
        return np.hstack([uv, self.targets])

    def take(self, index: np.ndarray) -> 'EpochBatch':
        return EpochBatch(self.inputs[index], self.targets[index], self.mask[index], self.uv_truth[index])


def sample_rotation(config: AugmentationConfig, rng: np.random.Generator) -> EulerAngles:
    return EulerAngles(
        rx=float(rng.uniform(*config.rx_range)),
        ry=float(rng.uniform(*config.ry_range)),
        rz=float(rng.uniform(*config.rz_range)),
    )


def sample_camera(config: AugmentationConfig, rng: np.random.Generator) -> WeakPerspectiveCamera:
    return WeakPerspectiveCamera(float(rng.uniform(*config.camera_lambda_range)))


def object_size(landmarks: Landmarks2D) -> float:
    """Larger of the observed landmarks' u and v extents"""
    observed = landmarks.coords[:, landmarks.mask]
    return float((observed.max(axis=1) - observed.min(axis=1)).max())


def add_landmark_noise(landmarks: Landmarks2D, noise_fraction: float,
                       rng: np.random.Generator) -> Landmarks2D:
    """Zero-mean Gaussian noise with std noise_fraction × object size on observed entries"""
    if noise_fraction == 0:
        return landmarks
    sigma = noise_fraction * object_size(landmarks)
    noise = rng.normal(0.0, sigma, size=landmarks.coords.shape)
    return Landmarks2D(landmarks.coords + noise * landmarks.mask, landmarks.mask)


def sample_missing_mask(n: int, missing_count: int, rng: np.random.Generator) -> np.ndarray:
    if missing_count > n - MIN_LANDMARKS:
        raise InvariantViolation(
            f"Cannot hide {missing_count} of {n} landmarks, {MIN_LANDMARKS} must stay observed"
        )
    mask = np.ones(n, dtype=bool)
    if missing_count:
        mask[rng.choice(n, size=missing_count, replace=False)] = False
    return mask


def _landmark_count(shapes: Sequence[Shape3D]) -> int:
    if not shapes:
        raise EmptyDataset("No shapes to augment")
    counts = {shape.n for shape in shapes}
    if len(counts) != 1:
        raise HeterogeneousLandmarkCount(f"Shapes have differing landmark counts: {sorted(counts)}")
    return counts.pop()


def _augment(shapes: Sequence[Shape3D], angles: Sequence[Optional[EulerAngles]],
             config: AugmentationConfig, rng: np.random.Generator,
             missing_count: int) -> EpochBatch:
    n = _landmark_count(shapes)
    m = len(shapes)
    inputs, uv_truth = np.zeros((m, 2 * n)), np.zeros((m, 2 * n))
    targets, masks = np.zeros((m, n)), np.ones((m, n), dtype=bool)

    for i, (shape, rotation) in enumerate(zip(shapes, angles)):
        view = shape if rotation is None else rotate_shape(shape, rotation)
        mask = sample_missing_mask(n, missing_count, rng)
        standardized, _ = standardize_3d(view, None if mask.all() else mask)
        projected = project_weak_perspective(view, sample_camera(config, rng))
        landmarks, _ = standardize_2d(Landmarks2D(projected.coords, mask))

        noisy = add_landmark_noise(landmarks, config.noise_fraction, rng)
        inputs[i] = noisy.interleaved()
        uv_truth[i] = standardized.coords[:2].T.reshape(-1)
        targets[i] = standardized.z
        masks[i] = mask

    return EpochBatch(inputs, targets, masks, uv_truth)


def make_epoch_batch(training_shapes: Sequence[Shape3D], config: AugmentationConfig,
                     rng: np.random.Generator, first_epoch: bool,
                     missing_count: int = 0) -> EpochBatch:
    """
    Original shapes on the first epoch, randomly rotated copies afterwards.

    One rotation per shape unless config.rotate_per_shape is off, in which
    case the whole batch shares a single rotation.
    """
    _landmark_count(training_shapes)
    if first_epoch:
        angles: List[Optional[EulerAngles]] = [None] * len(training_shapes)
    elif config.rotate_per_shape:
        angles = [sample_rotation(config, rng) for _ in training_shapes]
    else:
        angles = [sample_rotation(config, rng)] * len(training_shapes)
    return _augment(training_shapes, angles, config, rng, missing_count)


def expand_validation(shapes: Sequence[Shape3D], factor: int, config: AugmentationConfig,
                      rng: np.random.Generator, missing_count: int = 0) -> EpochBatch:
    """factor independently rotated, standardized and noised copies of every shape"""
    if factor < 1:
        raise InvariantViolation(f"Expansion factor must be >= 1, got {factor}")
    _landmark_count(shapes)
    copies = [shape for _ in range(factor) for shape in shapes]
    angles = [sample_rotation(config, rng) for _ in copies]
    logger.info(f"Expanded {len(shapes)} validation shapes to {len(copies)} samples")
    return _augment(copies, angles, config, rng, missing_count)
