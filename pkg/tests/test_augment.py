import numpy as np
import pytest

from reconstructor.augment import (
    AugmentationConfig,
    add_landmark_noise,
    expand_validation,
    make_epoch_batch,
    object_size,
    sample_camera,
    sample_missing_mask,
    sample_rotation,
)
from reconstructor.errors import EmptyDataset, HeterogeneousLandmarkCount, InvariantViolation
from reconstructor.geometry import Landmarks2D, Shape3D, procrustes_error, standardize_3d
from reconstructor.imputer import coordinate_mask


@pytest.fixture
def shapes(rng, random_shape):
    return [random_shape(rng, n=7) for _ in range(6)]


def test_sampled_rotation_stays_in_range(rng):
    config = AugmentationConfig.preset('face')
    for _ in range(100):
        angles = sample_rotation(config, rng)
        assert -20 <= angles.rx <= 20 and -20 <= angles.ry <= 20 and -60 <= angles.rz <= 60


def test_sampled_camera_scale_in_range(rng):
    config = AugmentationConfig(camera_lambda_range=(0.5, 2.0))
    scales = [sample_camera(config, rng).scale for _ in range(100)]
    assert min(scales) >= 0.5 and max(scales) <= 2.0


def test_object_size_uses_observed_extent():
    landmarks = Landmarks2D(np.array([[0.0, 4.0, 1.0, 100.0], [0.0, 1.0, 2.0, 100.0]]),
                            np.array([True, True, True, False]))
    assert object_size(landmarks) == 4.0


def test_zero_noise_returns_input(rng):
    landmarks = Landmarks2D(rng.normal(size=(2, 5)))
    assert add_landmark_noise(landmarks, 0.0, rng) is landmarks


def test_noise_scales_with_object_size_and_skips_missing(rng):
    mask = np.array([True] * 9 + [False])
    landmarks = Landmarks2D(rng.normal(size=(2, 10)), mask)
    noisy = add_landmark_noise(landmarks, 0.05, rng)

    assert noisy.coords[:, 9].tolist() == [0.0, 0.0]
    assert np.array_equal(noisy.mask, mask)
    deviation = (noisy.coords - landmarks.coords)[:, :9]
    assert 0 < np.abs(deviation).max() < 6 * 0.05 * object_size(landmarks)


def test_noise_std_follows_object_size():
    n = 5000
    coords = np.vstack([np.linspace(0.0, 1.0, n), np.linspace(0.0, 0.5, n)])
    landmarks = Landmarks2D(coords)
    assert object_size(landmarks) == 1.0

    noisy = add_landmark_noise(landmarks, 0.03, np.random.default_rng(4))
    deviation = (noisy.coords - coords).ravel()
    assert deviation.size == 10_000
    assert deviation.std() == pytest.approx(0.03, rel=0.05)


def test_missing_mask_counts(rng):
    mask = sample_missing_mask(10, 3, rng)
    assert mask.sum() == 7
    assert sample_missing_mask(10, 0, rng).all()
    with pytest.raises(InvariantViolation):
        sample_missing_mask(5, 3, rng)


def test_first_epoch_uses_original_orientation(rng, shapes):
    config = AugmentationConfig.preset('cmu')
    batch = make_epoch_batch(shapes, config, rng, first_epoch=True)

    assert len(batch) == len(shapes)
    for i, shape in enumerate(shapes):
        standardized, _ = standardize_3d(shape)
        assert np.allclose(batch.targets[i], standardized.z, atol=1e-12)
        assert np.allclose(batch.inputs[i], standardized.coords[:2].T.reshape(-1), atol=1e-10)


def test_later_epochs_rotate_each_shape_independently(rng, random_shape):
    shape = random_shape(rng, n=7)
    copies = [shape] * 4
    config = AugmentationConfig.preset('cmu')

    per_shape = make_epoch_batch(copies, config, rng, first_epoch=False)
    assert not np.allclose(per_shape.targets[0], per_shape.targets[1])

    shared = make_epoch_batch(copies, AugmentationConfig.preset('cmu', rotate_per_shape=False), rng, False)
    for row in shared.targets[1:]:
        assert np.allclose(row, shared.targets[0], atol=1e-12)


def test_noise_free_views_are_similar_to_original(rng, shapes):
    batch = make_epoch_batch(shapes, AugmentationConfig.preset('cmu'), rng, first_epoch=False)

    for i, shape in enumerate(shapes):
        view = Shape3D(np.vstack([batch.inputs[i].reshape(-1, 2).T, batch.targets[i]]))
        assert procrustes_error(view, shape) < 1e-8


def test_none_preset_keeps_orientation(rng, shapes):
    batch = make_epoch_batch(shapes, AugmentationConfig.preset('none'), rng, first_epoch=False)
    standardized, _ = standardize_3d(shapes[0])
    assert np.allclose(batch.targets[0], standardized.z, atol=1e-12)


def test_missing_landmarks_in_batch(rng, shapes):
    batch = make_epoch_batch(shapes, AugmentationConfig.preset('cmu'), rng, False, missing_count=2)

    assert batch.has_missing
    assert (~batch.mask).sum(axis=1).tolist() == [2] * len(shapes)
    missing = ~coordinate_mask(batch.mask)
    assert not batch.inputs[missing].any()

    truth = batch.joint_truth()
    assert truth.shape == (len(shapes), 3 * batch.n)
    assert np.array_equal(truth[:, :2 * batch.n][~missing], batch.inputs[~missing])
    assert np.array_equal(truth[:, :2 * batch.n][missing], batch.uv_truth[missing])


def test_take_selects_rows(rng, shapes):
    batch = make_epoch_batch(shapes, AugmentationConfig(), rng, True)
    part = batch.take(np.array([4, 1]))
    assert np.array_equal(part.targets, batch.targets[[4, 1]])
    assert len(part) == 2


def test_expand_validation(rng, shapes):
    batch = expand_validation(shapes, 3, AugmentationConfig.preset('cmu', noise_fraction=0.01), rng)
    assert len(batch) == 3 * len(shapes)
    with pytest.raises(InvariantViolation):
        expand_validation(shapes, 0, AugmentationConfig(), rng)


def test_augmentation_rejects_bad_collections(rng, random_shape):
    with pytest.raises(EmptyDataset):
        make_epoch_batch([], AugmentationConfig(), rng, True)
    with pytest.raises(HeterogeneousLandmarkCount):
        make_epoch_batch([random_shape(rng, n=5), random_shape(rng, n=6)], AugmentationConfig(), rng, True)


def test_same_seed_same_batch(shapes):
    config = AugmentationConfig.preset('cmu', noise_fraction=0.02)
    first = make_epoch_batch(shapes, config, np.random.default_rng(9), False, missing_count=1)
    second = make_epoch_batch(shapes, config, np.random.default_rng(9), False, missing_count=1)
    assert np.array_equal(first.inputs, second.inputs)
    assert np.array_equal(first.mask, second.mask)
