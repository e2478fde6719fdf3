import numpy as np
import pytest

from config.settings import AugmentationConfig, TrainingConfig
from reconstructor.datasets import SyntheticFamilySpec, generate_synthetic
from reconstructor.geometry import Shape3D
from reconstructor.pipeline import train


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def random_shape():
    """Factory for random well-spread shapes"""
    def make(rng, n=10, scale=1.0):
        return Shape3D(scale * rng.normal(size=(3, n)))
    return make


@pytest.fixture
def numeric_gradient():
    """Central differences of f() with respect to every entry of the given arrays, perturbed in place"""
    def gradient(f, arrays, h=1e-6):
        grads = []
        for array in arrays:
            grad = np.zeros_like(array)
            for index in np.ndindex(array.shape):
                original = array[index]
                array[index] = original + h
                up = f()
                array[index] = original - h
                down = f()
                array[index] = original
                grad[index] = (up - down) / (2 * h)
            grads.append(grad)
        return grads
    return gradient


@pytest.fixture(scope='session')
def sheet_dataset():
    return generate_synthetic(SyntheticFamilySpec('sheet', n=8, sample_count=24, seed=3))


@pytest.fixture(scope='session')
def tiny_config():
    return TrainingConfig(
        epochs=3,
        max_iters_per_epoch=10,
        patience=2,
        validation_factor=2,
        hidden_layers=1,
        augmentation=AugmentationConfig.preset('cmu'),
        seed=7,
    )


@pytest.fixture(scope='session')
def tiny_model(sheet_dataset, tiny_config):
    model, _ = train(sheet_dataset.shapes, tiny_config)
    return model
