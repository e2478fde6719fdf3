"""
Shape and landmark types, standardization, weak-perspective projection,
rotations and the Procrustes reconstruction error.

Shapes are stored as 3×n matrices (rows x; y; z), image landmarks as 2×n
matrices (rows u; v). All functions are pure.
"""
import logging
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from scipy.linalg import svd
from scipy.spatial.transform import Rotation

from reconstructor.errors import DegenerateShape, LengthMismatch, InvariantViolation

logger = logging.getLogger(__name__)

MIN_LANDMARKS = 3
DEGENERACY_TOLERANCE = 1e-12


@dataclass(frozen=True)
class Shape3D:
    """3×n landmark coordinates of an object"""
    coords: np.ndarray

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=np.float64)
        if coords.ndim != 2 or coords.shape[0] != 3:
            raise LengthMismatch(f"Shape3D needs a 3×n matrix, got shape {coords.shape}")
        if coords.shape[1] < MIN_LANDMARKS:
            raise InvariantViolation(f"Shape3D needs at least {MIN_LANDMARKS} landmarks, got {coords.shape[1]}")
        if not np.all(np.isfinite(coords)):
            raise InvariantViolation("Shape3D coordinates must be finite")
        object.__setattr__(self, 'coords', coords)

    @property
    def n(self) -> int:
        return self.coords.shape[1]

    @property
    def x(self) -> np.ndarray:
        return self.coords[0]

    @property
    def y(self) -> np.ndarray:
        return self.coords[1]

    @property
    def z(self) -> np.ndarray:
        return self.coords[2]


@dataclass(frozen=True)
class Landmarks2D:
    """2×n image landmarks with a per-landmark observed mask"""
    coords: np.ndarray
    mask: Optional[np.ndarray] = None

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=np.float64)
        if coords.ndim != 2 or coords.shape[0] != 2:
            raise LengthMismatch(f"Landmarks2D needs a 2×n matrix, got shape {coords.shape}")
        n = coords.shape[1]
        mask = np.ones(n, dtype=bool) if self.mask is None else np.asarray(self.mask, dtype=bool)
        if mask.shape != (n,):
            raise LengthMismatch(f"mask has shape {mask.shape}, expected ({n},)")
        if n < MIN_LANDMARKS:
            raise InvariantViolation(f"Landmarks2D needs at least {MIN_LANDMARKS} landmarks, got {n}")
        if mask.sum() < MIN_LANDMARKS:
            raise InvariantViolation(f"At least {MIN_LANDMARKS} landmarks must be observed, got {int(mask.sum())}")
        if not np.all(np.isfinite(coords[:, mask])):
            raise InvariantViolation("Observed landmark coordinates must be finite")
        # missing entries carry no information
        coords = np.where(mask, coords, 0.0)
        object.__setattr__(self, 'coords', coords)
        object.__setattr__(self, 'mask', mask)

    @property
    def n(self) -> int:
        return self.coords.shape[1]

    @property
    def u(self) -> np.ndarray:
        return self.coords[0]

    @property
    def v(self) -> np.ndarray:
        return self.coords[1]

    @property
    def complete(self) -> bool:
        return bool(self.mask.all())

    def interleaved(self) -> np.ndarray:
        """(u1, v1, u2, v2, ...) vector"""
        return self.coords.T.reshape(-1).copy()

    @classmethod
    def from_interleaved(cls, vector: np.ndarray, mask: Optional[np.ndarray] = None) -> 'Landmarks2D':
        vector = np.asarray(vector, dtype=np.float64)
        if vector.ndim != 1 or vector.size % 2:
            raise LengthMismatch(f"Interleaved vector needs an even length, got {vector.shape}")
        return cls(vector.reshape(-1, 2).T, mask)


@dataclass(frozen=True)
class StandardizationStats:
    mean_u: float
    mean_v: float
    s: float
    mean_z: float = 0.0


@dataclass(frozen=True)
class WeakPerspectiveCamera:
    """Orthographic projection followed by uniform scaling"""
    scale: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.scale) and self.scale > 0):
            raise InvariantViolation(f"Camera scale must be positive, got {self.scale}")

    @property
    def matrix(self) -> np.ndarray:
        return self.scale * np.eye(2, 3)


@dataclass(frozen=True)
class EulerAngles:
    """Rotation angles in degrees, applied about x, then y, then z"""
    rx: float = 0.0
    ry: float = 0.0
    rz: float = 0.0

    def as_matrix(self) -> np.ndarray:
        # extrinsic xyz gives Rz @ Ry @ Rx
        return Rotation.from_euler('xyz', [self.rx, self.ry, self.rz], degrees=True).as_matrix()


def _pooled_scale(a: np.ndarray, b: np.ndarray, reference: np.ndarray) -> float:
    s = (a.std() + b.std()) / 2.0
    if s <= DEGENERACY_TOLERANCE * np.abs(reference).max():
        raise DegenerateShape(f"Landmarks have no spread (pooled scale {s:.3e})")
    return float(s)


def standardize_3d(shape: Shape3D, mask: Optional[np.ndarray] = None) -> Tuple[Shape3D, StandardizationStats]:
    """
    Center each row and divide all rows by (σ(x) + σ(y)) / 2.

    With a mask, means and scale come from the observed landmarks only and
    are applied to every landmark.
    """
    coords = shape.coords
    observed = coords if mask is None else coords[:, np.asarray(mask, dtype=bool)]
    means = observed.mean(axis=1)
    s = _pooled_scale(observed[0] - means[0], observed[1] - means[1], coords)
    standardized = (coords - means[:, None]) / s
    stats = StandardizationStats(mean_u=float(means[0]), mean_v=float(means[1]), s=s, mean_z=float(means[2]))
    return Shape3D(standardized), stats


def standardize_2d(landmarks: Landmarks2D) -> Tuple[Landmarks2D, StandardizationStats]:
    """Standardize the observed landmarks; missing ones stay flagged (and zero)"""
    mask = landmarks.mask
    observed = landmarks.coords[:, mask]
    means = observed.mean(axis=1)
    s = _pooled_scale(observed[0] - means[0], observed[1] - means[1], observed)
    standardized = (landmarks.coords - means[:, None]) / s
    stats = StandardizationStats(mean_u=float(means[0]), mean_v=float(means[1]), s=s)
    return Landmarks2D(standardized, mask), stats


def project_weak_perspective(shape: Shape3D, camera: WeakPerspectiveCamera) -> Landmarks2D:
    return Landmarks2D(camera.matrix @ shape.coords)


def rotate_shape(shape: Shape3D, angles: EulerAngles) -> Shape3D:
    return Shape3D(angles.as_matrix() @ shape.coords)


def assemble_reconstruction(standardized_uv: Landmarks2D, depth: np.ndarray) -> Shape3D:
    """
    Stack (û; v̂; ẑ) into a shape.

    The result is only defined up to scale: the camera scale and image
    translation were removed by standardization.
    """
    depth = np.asarray(depth, dtype=np.float64)
    if depth.shape != (standardized_uv.n,):
        raise LengthMismatch(f"depth has shape {depth.shape}, expected ({standardized_uv.n},)")
    if not standardized_uv.complete:
        raise InvariantViolation("All landmarks must be present to assemble a reconstruction")
    return Shape3D(np.vstack([standardized_uv.coords, depth]))


@dataclass(frozen=True)
class ProcrustesResult:
    error: float
    residuals: np.ndarray = field(repr=False)
    rotation: np.ndarray = field(repr=False)
    scale: float = 1.0


def _centered_points(shape: Shape3D) -> np.ndarray:
    points = shape.coords.T
    centered = points - points.mean(axis=0)
    if np.linalg.norm(centered) <= DEGENERACY_TOLERANCE * max(np.abs(points).max(), 1.0):
        raise DegenerateShape("Shape has zero spread")
    return centered


def procrustes_alignment(recon: Shape3D, truth: Shape3D) -> ProcrustesResult:
    """
    Align recon onto truth with rotation, uniform scale and translation.

    truth is first normalized so its centered landmarks have unit mean norm;
    reflections are excluded. Residuals are per-landmark distances after
    alignment.
    """
    if recon.n != truth.n:
        raise LengthMismatch(f"Shapes have {recon.n} and {truth.n} landmarks")
    source = _centered_points(recon)
    target = _centered_points(truth)
    target = target / np.linalg.norm(target, axis=1).mean()

    u, sigma, vt = svd(source.T @ target)
    d = np.sign(np.linalg.det(u @ vt)) or 1.0
    correction = np.diag([1.0, 1.0, d])
    rotation = u @ correction @ vt
    scale = float((sigma * np.diag(correction)).sum() / (source ** 2).sum())

    aligned = scale * source @ rotation
    residuals = np.linalg.norm(aligned - target, axis=1)
    return ProcrustesResult(error=float(residuals.mean()), residuals=residuals, rotation=rotation, scale=scale)


def procrustes_error(recon: Shape3D, truth: Shape3D) -> float:
    """Mean per-landmark distance after similarity alignment onto normalized truth"""
    return procrustes_alignment(recon, truth).error
