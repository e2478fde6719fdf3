"""
Training orchestration, reconstruction and evaluation.

Training follows the epoch schedule: each epoch builds one augmented batch
(the original shapes first, rotated copies afterwards), runs a bounded
number of RMSProp iterations on it at an inverse-time decaying learning
rate and scores the validation set. Training stops when validation error
has not improved for `patience` epochs and the best snapshot is returned.
"""
import time
import logging
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from config.settings import TrainingConfig
from reconstructor.augment import (
    EpochBatch,
    add_landmark_noise,
    expand_validation,
    make_epoch_batch,
    sample_missing_mask,
)
from reconstructor.errors import (
    EmptyDataset,
    HeterogeneousLandmarkCount,
    LandmarkCountMismatch,
    MissingWithoutImputer,
)
from reconstructor.geometry import (
    Landmarks2D,
    Shape3D,
    WeakPerspectiveCamera,
    assemble_reconstruction,
    procrustes_alignment,
    project_weak_perspective,
    standardize_2d,
)
from reconstructor.imputer import (
    ImputerParams,
    JointParams,
    build_input,
    forward_joint,
    impute,
    init_imputer,
    joint_backward,
    joint_loss,
)
from reconstructor.net import (
    NetworkParams,
    RmsPropState,
    backward_from_output,
    clamp_targets,
    forward,
    init_network,
    loss,
    loss_gradient,
    rmsprop_step,
)

logger = logging.getLogger(__name__)

INPUT_ORDERING = 'interleaved-uv'

HISTORY_COLUMNS = ['epoch', 'learning_rate', 'train_loss', 'validation_error', 'iterations', 'improved']


@dataclass
class TrainedModel:
    """Depth network, optional imputation layer and training metadata"""
    net: NetworkParams
    imputer: Optional[ImputerParams] = None
    input_ordering: str = INPUT_ORDERING
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.net.dims[0] != 2 * self.net.n:
            raise LandmarkCountMismatch(f"Network maps {self.net.dims[0]} inputs to {self.net.n} depths")
        if self.imputer is not None and self.imputer.n != self.n:
            raise LandmarkCountMismatch(f"Imputer is built for n={self.imputer.n}, network for n={self.n}")

    @property
    def n(self) -> int:
        return self.net.n

    def reconstruct(self, landmarks: Landmarks2D) -> Shape3D:
        return reconstruct(self, landmarks)


@dataclass
class EvalReport:
    per_sample_errors: np.ndarray
    per_landmark_mean_residuals: np.ndarray
    noise_fraction: float = 0.0
    missing_count: int = 0
    wall_time: float = 0.0
    throughput: float = 0.0

    @property
    def mean_error(self) -> float:
        return float(np.mean(self.per_sample_errors))

    def to_dict(self, include_timing: bool = False) -> Dict[str, Any]:
        report = {
            'samples': len(self.per_sample_errors),
            'mean_error': self.mean_error,
            'noise_fraction': self.noise_fraction,
            'missing_count': self.missing_count,
            'per_sample_errors': [float(e) for e in self.per_sample_errors],
            'per_landmark_mean_residuals': [float(r) for r in self.per_landmark_mean_residuals],
        }
        if include_timing:
            report['wall_time'] = self.wall_time
            report['throughput'] = self.throughput
        return report

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            'sample': np.arange(len(self.per_sample_errors)),
            'error': self.per_sample_errors,
        })

    def landmark_frame(self) -> pd.DataFrame:
        residuals = self.per_landmark_mean_residuals
        return pd.DataFrame({
            'landmark': np.arange(len(residuals)),
            'mean_residual': residuals,
            'relative_error': residuals / self.mean_error if self.mean_error > 0 else np.zeros_like(residuals),
        })


def _landmark_count(*collections: Sequence[Shape3D]) -> int:
    counts = {shape.n for shapes in collections for shape in shapes}
    if not counts:
        raise EmptyDataset("Dataset has no shapes")
    if len(counts) != 1:
        raise HeterogeneousLandmarkCount(f"Shapes have differing landmark counts: {sorted(counts)}")
    return counts.pop()


class ModelTrainer:
    """Train the depth network (and imputer) with early stopping"""

    def __init__(self, config: TrainingConfig):
        config.validate()
        self.config = config
        self.rng = np.random.default_rng(config.seed)
        # views, noise and missing masks draw from their own stream
        self.augment_rng = np.random.default_rng([config.seed, config.augmentation.seed])
        logger.info(f"ModelTrainer initialized (config {config.config_hash()[:12]})")

    def _initial_params(self, n: int):
        net = init_network(n, self.config.seed, self.config.hidden_layers)
        if not self.config.missing_data:
            return net
        settings = self.config.imputer
        imputer = init_imputer(n, self.rng, settings.tau, settings.weights, settings.activation)
        return JointParams(imputer, net)

    def _objective(self, params, batch: EpochBatch, with_gradient: bool = True):
        """Summed loss over the batch and, optionally, its gradient"""
        if isinstance(params, JointParams):
            if not with_gradient:
                output = forward_joint(params.imputer, params.net, batch.inputs, batch.mask)
                return joint_loss(output, batch.joint_truth(), self.config.imputer.depth_weight), None
            return joint_backward(params.imputer, params.net, batch.inputs, batch.mask,
                                  batch.joint_truth(), self.config.imputer.depth_weight)
        predictions, activations = forward(params, batch.inputs)
        value = loss(predictions, batch.targets)
        if not with_gradient:
            return value, None
        grads, _ = backward_from_output(params, activations, loss_gradient(predictions, batch.targets))
        return value, grads

    def _iterate(self, params, state: RmsPropState, batch: EpochBatch):
        """Run up to max_iters_per_epoch optimizer steps on one epoch batch"""
        size = self.config.batch_size
        order = np.arange(len(batch))
        cursor = len(batch)
        value = 0.0
        for _ in range(self.config.max_iters_per_epoch):
            if size is None or size >= len(batch):
                chunk = batch
            else:
                if cursor + size > len(batch):
                    order = self.rng.permutation(len(batch))
                    cursor = 0
                chunk = batch.take(order[cursor:cursor + size])
                cursor += size
            value, grads = self._objective(params, chunk)
            params, state = rmsprop_step(params, grads, state)
        return params, state, value / len(chunk)

    def fit(self, train_shapes: Sequence[Shape3D],
            validation_shapes: Sequence[Shape3D]) -> Tuple[TrainedModel, pd.DataFrame]:
        """Train on one split; returns the best-validation model and the epoch history"""
        if not train_shapes or not validation_shapes:
            raise EmptyDataset("Training and validation sets must both be nonempty")
        n = _landmark_count(train_shapes, validation_shapes)
        cfg = self.config
        missing = cfg.imputer.missing_count if cfg.missing_data else 0

        logger.info(f"Training on {len(train_shapes)} shapes, validating on {len(validation_shapes)} (n={n})")

        try:
            params = self._initial_params(n)
            state = RmsPropState.for_params(params, cfg.learning_rate, cfg.rmsprop_decay, cfg.rmsprop_epsilon)
            validation = expand_validation(validation_shapes, cfg.validation_factor, cfg.augmentation,
                                           self.augment_rng, missing)
            validation.targets = clamp_targets(validation.targets)

            best_params, best_error, best_epoch = params.copy(), np.inf, 0
            stale = 0
            rows: List[Dict[str, Any]] = []

            for epoch in range(1, cfg.epochs + 1):
                batch = make_epoch_batch(train_shapes, cfg.augmentation, self.augment_rng, epoch == 1, missing)
                state = replace(state, learning_rate=cfg.learning_rate_at(epoch))
                batch.targets = clamp_targets(batch.targets)
                params, state, train_loss = self._iterate(params, state, batch)

                value, _ = self._objective(params, validation, with_gradient=False)
                validation_error = value / len(validation)
                improved = validation_error < best_error
                if improved:
                    best_params, best_error, best_epoch = params.copy(), validation_error, epoch
                    stale = 0
                else:
                    stale += 1

                rows.append({
                    'epoch': epoch,
                    'learning_rate': state.learning_rate,
                    'train_loss': train_loss,
                    'validation_error': validation_error,
                    'iterations': cfg.max_iters_per_epoch,
                    'improved': improved,
                })
                if epoch % cfg.log_every == 0 or epoch == 1:
                    logger.info(f"Epoch {epoch}: train loss {train_loss:.6f}, validation {validation_error:.6f}")

                if stale >= cfg.patience:
                    logger.info(f"Early stopping at epoch {epoch}, best epoch {best_epoch} ({best_error:.6f})")
                    break

        except Exception as e:
            logger.error(f"Training failed: {e}")
            raise

        if isinstance(best_params, JointParams):
            net, imputer = best_params.net, best_params.imputer
        else:
            net, imputer = best_params, None

        model = TrainedModel(
            net=net,
            imputer=imputer,
            metadata={
                'config_hash': cfg.config_hash(),
                'epoch_reached': epoch,
                'best_epoch': best_epoch,
                'best_validation_error': float(best_error),
            },
        )
        history = pd.DataFrame(rows, columns=HISTORY_COLUMNS)
        logger.info(f"Training finished after {epoch} epochs, best validation error {best_error:.6f}")
        return model, history


def split_dataset(dataset: Sequence[Shape3D], fraction: float,
                  rng: np.random.Generator) -> Tuple[List[Shape3D], List[Shape3D]]:
    """Random train/validation split keeping at least one shape on each side"""
    if len(dataset) < 2:
        raise EmptyDataset(f"Need at least 2 shapes to split into training and validation, got {len(dataset)}")
    order = rng.permutation(len(dataset))
    count = min(max(1, int(round(fraction * len(dataset)))), len(dataset) - 1)
    validation = [dataset[i] for i in sorted(order[:count])]
    train_set = [dataset[i] for i in sorted(order[count:])]
    return train_set, validation


def train(dataset: Sequence[Shape3D], config: TrainingConfig,
          validation: Optional[Sequence[Shape3D]] = None) -> Tuple[TrainedModel, pd.DataFrame]:
    """Train a model; without an explicit validation set a configured fraction is held out"""
    if not dataset:
        raise EmptyDataset("Dataset has no shapes")
    if validation is None:
        split_rng = np.random.default_rng([config.seed, 1])
        dataset, validation = split_dataset(dataset, config.validation_fraction, split_rng)
    return ModelTrainer(config).fit(dataset, validation)


def reconstruct(model: TrainedModel, landmarks: Landmarks2D) -> Shape3D:
    """
    Recover the 3D shape (up to scale) from one view's landmarks.

    Standardization removes the camera scale and image translation, missing
    landmarks are imputed when the model carries an imputer, then the
    predicted depths are stacked under the standardized 2D coordinates.
    """
    if landmarks.n != model.n:
        raise LandmarkCountMismatch(f"Model expects {model.n} landmarks, got {landmarks.n}")
    if not landmarks.complete and model.imputer is None:
        raise MissingWithoutImputer(
            f"{int((~landmarks.mask).sum())} landmarks are missing and the model has no imputer"
        )
    standardized, _ = standardize_2d(landmarks)
    d = build_input(standardized)
    if model.imputer is not None:
        d = impute(model.imputer, d, standardized.mask)
    depth, _ = forward(model.net, d)
    return assemble_reconstruction(Landmarks2D.from_interleaved(d), depth)


def evaluate(model, test_shapes: Sequence[Shape3D], camera: WeakPerspectiveCamera,
             noise_fraction: float, missing_count: int, rng: np.random.Generator) -> EvalReport:
    """
    Project, perturb and reconstruct every test shape and score it with the
    Procrustes error against the ground truth.

    `model` is anything with `n` and `reconstruct(landmarks)`.
    """
    if not test_shapes:
        raise EmptyDataset("Test set has no shapes")
    n = _landmark_count(test_shapes)
    if n != model.n:
        raise LandmarkCountMismatch(f"Model expects {model.n} landmarks, test shapes have {n}")

    errors = np.zeros(len(test_shapes))
    residuals = np.zeros((len(test_shapes), n))
    started = time.perf_counter()
    try:
        for i, shape in enumerate(test_shapes):
            projected = project_weak_perspective(shape, camera)
            mask = sample_missing_mask(n, missing_count, rng)
            landmarks = add_landmark_noise(Landmarks2D(projected.coords, mask), noise_fraction, rng)
            result = procrustes_alignment(model.reconstruct(landmarks), shape)
            errors[i] = result.error
            residuals[i] = result.residuals
    except Exception as e:
        logger.error(f"Evaluation failed: {e}")
        raise
    wall_time = time.perf_counter() - started

    report = EvalReport(
        per_sample_errors=errors,
        per_landmark_mean_residuals=residuals.mean(axis=0),
        noise_fraction=noise_fraction,
        missing_count=missing_count,
        wall_time=wall_time,
        throughput=len(test_shapes) / wall_time if wall_time > 0 else float('inf'),
    )
    logger.info(
        f"Evaluated {len(test_shapes)} shapes (noise {noise_fraction}, missing {missing_count}): "
        f"mean error {report.mean_error:.6f}, {report.throughput:.0f} shapes/s"
    )
    return report


def noise_sweep(model, test_shapes: Sequence[Shape3D], camera: WeakPerspectiveCamera,
                noise_fractions: Sequence[float], seeds: Sequence[int],
                missing_count: int = 0) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """
    Mean error per (noise fraction, seed) and per-landmark relative error.

    Each seed reuses its random stream at every noise level, so the curves
    differ only through the noise magnitude.
    """
    rows, landmark_rows = [], []
    for fraction in noise_fractions:
        per_landmark = []
        for seed in seeds:
            report = evaluate(model, test_shapes, camera, fraction, missing_count, np.random.default_rng(seed))
            rows.append({'noise_fraction': fraction, 'seed': seed, 'mean_error': report.mean_error})
            per_landmark.append(report.per_landmark_mean_residuals)
        per_landmark = np.mean(per_landmark, axis=0)
        overall = per_landmark.mean()
        for j, value in enumerate(per_landmark):
            landmark_rows.append({
                'noise_fraction': fraction,
                'landmark': j,
                'relative_error': value / overall if overall > 0 else 0.0,
            })
    return pd.DataFrame(rows), pd.DataFrame(landmark_rows)


def benchmark(model: TrainedModel, repetitions: int, rng: np.random.Generator) -> Dict[str, float]:
    """Single-view reconstructions per second on random landmark sets"""
    frames = [Landmarks2D(rng.normal(size=(2, model.n))) for _ in range(min(repetitions, 100))]
    started = time.perf_counter()
    for i in range(repetitions):
        reconstruct(model, frames[i % len(frames)])
    seconds = time.perf_counter() - started
    per_second = repetitions / seconds if seconds > 0 else float('inf')
    logger.info(f"{repetitions} reconstructions in {seconds:.3f}s ({per_second:.0f}/s)")
    return {'n': model.n, 'repetitions': repetitions, 'seconds': seconds, 'per_second': per_second}
