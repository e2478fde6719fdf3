import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from reconstructor.errors import DegenerateShape, InvariantViolation, LengthMismatch
from reconstructor.geometry import (
    EulerAngles,
    Landmarks2D,
    Shape3D,
    WeakPerspectiveCamera,
    assemble_reconstruction,
    procrustes_alignment,
    procrustes_error,
    project_weak_perspective,
    rotate_shape,
    standardize_2d,
    standardize_3d,
)


# ── Types ────────────────────────────────────────────────────────────────

def test_shape_rejects_too_few_landmarks():
    with pytest.raises(InvariantViolation):
        Shape3D(np.zeros((3, 2)))


def test_shape_rejects_non_finite():
    coords = np.arange(12.0).reshape(3, 4)
    coords[1, 2] = np.nan
    with pytest.raises(InvariantViolation):
        Shape3D(coords)


def test_shape_rejects_wrong_row_count():
    with pytest.raises(LengthMismatch):
        Shape3D(np.zeros((2, 5)))


def test_landmarks_zero_missing_entries():
    coords = np.array([[1.0, 2.0, 3.0, 4.0], [5.0, 6.0, 7.0, np.nan]])
    landmarks = Landmarks2D(coords, np.array([True, True, True, False]))
    assert landmarks.coords[:, 3].tolist() == [0.0, 0.0]
    assert not landmarks.complete


def test_landmarks_need_three_observed():
    with pytest.raises(InvariantViolation):
        Landmarks2D(np.ones((2, 4)), np.array([True, True, False, False]))


def test_interleaved_layout():
    landmarks = Landmarks2D(np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]))
    assert landmarks.interleaved().tolist() == [1.0, 4.0, 2.0, 5.0, 3.0, 6.0]
    assert np.array_equal(Landmarks2D.from_interleaved(landmarks.interleaved()).coords, landmarks.coords)


def test_camera_scale_must_be_positive():
    with pytest.raises(InvariantViolation):
        WeakPerspectiveCamera(0.0)


# ── Standardization ──────────────────────────────────────────────────────

def test_standardize_3d_centers_and_scales(rng, random_shape):
    shape = random_shape(rng, n=12, scale=40.0)
    standardized, stats = standardize_3d(shape)

    assert np.allclose(standardized.coords.mean(axis=1), 0.0, atol=1e-12)
    assert (standardized.x.std() + standardized.y.std()) / 2 == pytest.approx(1.0, abs=1e-12)
    assert stats.s == pytest.approx((shape.x.std() + shape.y.std()) / 2)


def test_standardize_3d_is_idempotent(rng, random_shape):
    once, _ = standardize_3d(random_shape(rng, n=9, scale=7.0))
    twice, _ = standardize_3d(once)
    assert np.allclose(once.coords, twice.coords, atol=1e-12)


def test_standardize_3d_with_mask_uses_observed_stats(rng, random_shape):
    shape = random_shape(rng, n=8)
    mask = np.array([True] * 7 + [False])
    _, stats = standardize_3d(shape, mask)
    assert stats.mean_u == pytest.approx(shape.x[:7].mean())
    assert stats.s == pytest.approx((shape.x[:7].std() + shape.y[:7].std()) / 2)


def test_coincident_landmarks_are_degenerate():
    with pytest.raises(DegenerateShape):
        standardize_3d(Shape3D(np.full((3, 5), 2.5)))
    with pytest.raises(DegenerateShape):
        standardize_2d(Landmarks2D(np.full((2, 5), -1.0)))


def test_standardize_3d_hand_example():
    shape = Shape3D(np.array([[0.0, 1.0, 2.0], [0.0, 0.0, 0.0], [5.0, 5.0, 5.0]]))
    standardized, stats = standardize_3d(shape)

    assert standardized.x == pytest.approx([-2.4495, 0.0, 2.4495], abs=1e-4)
    assert not standardized.y.any()
    assert standardized.z == pytest.approx([0.0, 0.0, 0.0], abs=1e-12)
    assert stats.s == pytest.approx(0.40825, abs=1e-5)


def test_projection_standardization_identity(rng, random_shape):
    for _ in range(1000):
        shape = random_shape(rng, n=int(rng.integers(3, 30)), scale=float(rng.uniform(0.1, 100.0)))
        camera = WeakPerspectiveCamera(float(rng.uniform(0.1, 10.0)))
        projected = project_weak_perspective(shape, camera)
        shifted = Landmarks2D(projected.coords + rng.uniform(-50, 50, size=(2, 1)))

        image, _ = standardize_2d(shifted)
        standardized, _ = standardize_3d(shape)
        assert np.allclose(image.coords, standardized.coords[:2], rtol=0, atol=1e-10)


# ── Projection and rotation ──────────────────────────────────────────────

def test_weak_perspective_drops_depth_and_scales():
    shape = Shape3D(np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0], [7.0, 8.0, 9.0]]))
    landmarks = project_weak_perspective(shape, WeakPerspectiveCamera(2.0))
    assert landmarks.coords.tolist() == [[2.0, 4.0, 6.0], [8.0, 10.0, 12.0]]


def test_euler_order_is_z_after_y_after_x():
    rx, ry, rz = np.radians([10.0, -25.0, 70.0])
    Rx = np.array([[1, 0, 0], [0, np.cos(rx), -np.sin(rx)], [0, np.sin(rx), np.cos(rx)]])
    Ry = np.array([[np.cos(ry), 0, np.sin(ry)], [0, 1, 0], [-np.sin(ry), 0, np.cos(ry)]])
    Rz = np.array([[np.cos(rz), -np.sin(rz), 0], [np.sin(rz), np.cos(rz), 0], [0, 0, 1]])

    assert np.allclose(EulerAngles(10.0, -25.0, 70.0).as_matrix(), Rz @ Ry @ Rx, atol=1e-14)


def test_half_turn_about_z():
    shape = Shape3D(np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]]))
    rotated = rotate_shape(shape, EulerAngles(rz=180.0))

    assert rotated.x[0] == pytest.approx(-1.0, abs=1e-12)
    assert rotated.y[0] == pytest.approx(0.0, abs=1e-12)
    assert np.allclose(rotated.coords[:, 1:], 0.0)


def test_rotation_preserves_distances(rng, random_shape):
    shape = random_shape(rng, n=10)
    rotated = rotate_shape(shape, EulerAngles(33.0, -12.0, 150.0))

    def pairwise(coords):
        return np.linalg.norm(coords[:, :, None] - coords[:, None, :], axis=0)

    assert np.allclose(pairwise(shape.coords), pairwise(rotated.coords), atol=1e-12)


def test_assemble_checks_depth_length():
    uv = Landmarks2D(np.eye(2, 4) + np.arange(8.0).reshape(2, 4))
    with pytest.raises(LengthMismatch):
        assemble_reconstruction(uv, np.zeros(3))
    assert assemble_reconstruction(uv, np.ones(4)).z.tolist() == [1.0] * 4


# ── Procrustes ───────────────────────────────────────────────────────────

def _normalized(shape):
    centered = shape.coords - shape.coords.mean(axis=1, keepdims=True)
    return Shape3D(centered / np.linalg.norm(centered, axis=0).mean())


def test_procrustes_identical_shapes(rng, random_shape):
    shape = random_shape(rng)
    assert procrustes_error(shape, shape) < 1e-12


def test_procrustes_quotients_similarity_transforms(rng, random_shape):
    for _ in range(50):
        truth = random_shape(rng, n=int(rng.integers(4, 20)))
        angles = EulerAngles(*rng.uniform(-180, 180, size=3))
        moved = rotate_shape(truth, angles).coords * rng.uniform(0.2, 5.0) + rng.normal(size=(3, 1))
        assert procrustes_error(Shape3D(moved), truth) < 1e-8


def test_procrustes_rejects_reflections(rng, random_shape):
    truth = random_shape(rng, n=8)
    mirrored = Shape3D(truth.coords * np.array([[1.0], [1.0], [-1.0]]))
    assert procrustes_error(mirrored, truth) > 1e-3


def test_procrustes_displaced_landmark_bound(rng, random_shape):
    truth = _normalized(random_shape(rng, n=6))
    delta = 0.05
    displaced = truth.coords.copy()
    displaced[2, 3] += delta

    error = procrustes_error(Shape3D(displaced), truth)
    assert 0 < error <= delta


def test_procrustes_residuals_match_error(rng, random_shape):
    result = procrustes_alignment(random_shape(rng), random_shape(rng))
    assert result.residuals.shape == (10,)
    assert result.error == pytest.approx(result.residuals.mean())
    assert result.scale > 0
    assert np.linalg.det(result.rotation) == pytest.approx(1.0)


def test_procrustes_length_mismatch(rng, random_shape):
    with pytest.raises(LengthMismatch):
        procrustes_error(random_shape(rng, n=4), random_shape(rng, n=5))


def _grid_oracle(recon, truth, center, half_width, step):
    """Least-squares similarity alignment over a rotation grid around `center`"""
    source = recon.coords.T - recon.coords.T.mean(axis=0)
    target = truth.coords.T - truth.coords.T.mean(axis=0)
    target = target / np.linalg.norm(target, axis=1).mean()

    offsets = np.arange(-half_width, half_width + step / 2, step)
    grid = np.stack(np.meshgrid(offsets, offsets, offsets, indexing='ij'), axis=-1).reshape(-1, 3)
    rotations = (center * Rotation.from_euler('xyz', grid, degrees=True)).as_matrix()

    aligned = np.einsum('pi,kij->kpj', source, rotations)
    scales = np.einsum('kpj,pj->k', aligned, target) / (source ** 2).sum()
    sse = ((scales[:, None, None] * aligned - target) ** 2).sum(axis=(1, 2))
    best = int(np.argmin(sse))
    residuals = np.linalg.norm(scales[best] * aligned[best] - target, axis=1)
    return residuals.mean(), Rotation.from_matrix(rotations[best])


def test_procrustes_matches_rotation_grid_oracle(rng):
    for _ in range(5):
        truth = Shape3D(rng.normal(size=(3, 4)))
        true_rotation = Rotation.from_euler('xyz', rng.uniform(-60, 60, size=3), degrees=True)
        noisy = truth.coords + rng.normal(scale=0.005, size=(3, 4))
        recon = Shape3D(true_rotation.inv().as_matrix() @ noisy * 2.0)

        # coarse then fine grid around the generating rotation
        _, coarse = _grid_oracle(recon, truth, true_rotation.inv(), 2.0, 0.5)
        oracle, _ = _grid_oracle(recon, truth, coarse, 0.5, 0.05)

        assert procrustes_error(recon, truth) == pytest.approx(oracle, abs=1e-3)
