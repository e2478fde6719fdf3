"""
Command-line entry points.

    python -m reconstructor.cli synth        --kind sheet --n 20 --samples 300 --output data/sheet.txt
    python -m reconstructor.cli train        --dataset data/sheet.txt --output models/sheet.json
    python -m reconstructor.cli eval         --checkpoint models/sheet.json --dataset data/test.txt
    python -m reconstructor.cli reconstruct  --checkpoint models/sheet.json --landmarks frames.txt
    python -m reconstructor.cli bench        --checkpoint models/sheet.json --repetitions 5000
    python -m reconstructor.cli sweep        --checkpoint models/sheet.json --dataset data/test.txt

Failures print a single `error=<CODE> message=<text>` line on stderr and
exit with the error class's status.
"""
import sys
import json
import logging
import argparse
from dataclasses import replace
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from config.settings import AugmentationConfig, TrainingConfig, config, configure_logging
from reconstructor.checkpoint import load_model, save_model
from reconstructor.datasets import (
    FAMILIES,
    CHAIN_PARENTS,
    DatasetFile,
    SyntheticFamilySpec,
    chain_bones,
    export_obj,
    generate_synthetic,
    load_dataset,
    load_landmark_frames,
    save_dataset,
)
from reconstructor.errors import LandmarkCountMismatch, ReconstructionError
from reconstructor.geometry import WeakPerspectiveCamera
from reconstructor.pipeline import benchmark, evaluate, noise_sweep, reconstruct, train

logger = logging.getLogger(__name__)

EXIT_FILE_NOT_FOUND = 66
EXIT_INTERNAL = 70


def _write_json(data: Dict[str, Any], path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, sort_keys=True, indent=2) + '\n', encoding='utf-8')
    logger.info(f"Report written to {path}")
    return path


def _banner(text: str):
    logger.info("=" * 50)
    logger.info(text)
    logger.info("=" * 50)


# ============================================================================
# COMMANDS
# ============================================================================

def cmd_synth(args) -> int:
    spec = SyntheticFamilySpec(
        kind=args.kind,
        n=args.n if args.n is not None else (20 if args.kind == 'sheet' else 15 if args.kind == 'chain' else 16),
        sample_count=args.samples,
        seed=args.seed,
        joint_angle_range=args.joint_angle_range,
        amplitude_range=tuple(args.amplitude),
        frequency_range=tuple(args.frequency),
        aspect_jitter=args.aspect_jitter,
        vertex_jitter=args.vertex_jitter,
    )
    dataset = generate_synthetic(spec)
    save_dataset(dataset, args.output)
    return 0


def _training_config(args) -> TrainingConfig:
    cfg = TrainingConfig.from_file(args.config) if args.config else config.training
    overrides = {
        'epochs': args.epochs,
        'max_iters_per_epoch': args.max_iters,
        'learning_rate': args.learning_rate,
        'learning_rate_decay': args.lr_decay,
        'patience': args.patience,
        'validation_factor': args.validation_factor,
        'seed': args.seed,
    }
    cfg = replace(cfg, **{k: v for k, v in overrides.items() if v is not None})
    if args.batch_size is not None:
        cfg = replace(cfg, batch_size=None if args.batch_size == 'full' else int(args.batch_size))

    augmentation = cfg.augmentation
    if args.preset is not None:
        augmentation = AugmentationConfig.preset(
            args.preset,
            noise_fraction=augmentation.noise_fraction,
            camera_lambda_range=augmentation.camera_lambda_range,
            seed=augmentation.seed,
            rotate_per_shape=augmentation.rotate_per_shape,
        )
    if args.noise is not None:
        augmentation = replace(augmentation, noise_fraction=args.noise)
    if args.batch_rotation:
        augmentation = replace(augmentation, rotate_per_shape=False)

    imputer = cfg.imputer
    if args.imputer:
        imputer = replace(imputer, enabled=True)
    if args.missing_count is not None:
        imputer = replace(imputer, missing_count=args.missing_count)
    if args.tau is not None:
        imputer = replace(imputer, tau=args.tau, lambda_weights=None)

    cfg = replace(cfg, augmentation=augmentation, imputer=imputer)
    cfg.validate()
    return cfg


def cmd_train(args) -> int:
    cfg = _training_config(args)
    dataset = load_dataset(args.dataset)
    validation = load_dataset(args.validation).shapes if args.validation else None

    _banner(f"Training on {args.dataset}")
    model, history = train(dataset.shapes, cfg, validation)
    save_model(model, args.output)

    history_path = Path(args.history) if args.history else Path(args.output).with_suffix('.history.json')
    _write_json({
        'config': cfg.to_dict(),
        'metadata': model.metadata,
        'history': history.to_dict(orient='records'),
    }, history_path)
    history.to_parquet(history_path.with_suffix('.parquet'), index=False)
    _banner(f"Training completed: best validation error {model.metadata['best_validation_error']:.6f}")
    return 0


def cmd_eval(args) -> int:
    model = load_model(args.checkpoint)
    dataset = load_dataset(args.dataset)

    _banner(f"Evaluating {args.checkpoint} on {args.dataset}")
    report = evaluate(
        model,
        dataset.shapes,
        WeakPerspectiveCamera(args.camera_scale),
        args.noise,
        args.missing,
        np.random.default_rng(args.seed),
    )
    data = report.to_dict(include_timing=args.with_timing)
    data['checkpoint'] = str(args.checkpoint)
    data['dataset'] = str(args.dataset)
    data['sample_ids'] = [sample_id for sample_id, _ in dataset.samples]
    output = Path(args.output)
    _write_json(data, output)
    if args.parquet:
        report.to_frame().to_parquet(output.with_suffix('.samples.parquet'), index=False)
        report.landmark_frame().to_parquet(output.with_suffix('.landmarks.parquet'), index=False)
    print(f"mean_error={report.mean_error:.10f} samples={len(dataset)}")
    return 0


def cmd_reconstruct(args) -> int:
    model = load_model(args.checkpoint)
    frames = load_landmark_frames(args.landmarks)
    lines = None
    if args.skeleton:
        if model.n != len(CHAIN_PARENTS):
            raise LandmarkCountMismatch(f"Skeleton bones need a {len(CHAIN_PARENTS)}-landmark model, got n={model.n}")
        lines = chain_bones()

    samples = []
    for frame_id, landmarks in frames:
        shape = reconstruct(model, landmarks)
        samples.append((frame_id, shape))
        if args.mesh_dir:
            export_obj(shape, Path(args.mesh_dir) / f"{frame_id}.obj", lines=lines)
    save_dataset(DatasetFile(n=model.n, unit='standardized (up to scale)', samples=samples), args.output)
    logger.info(f"Reconstructed {len(samples)} frames")
    return 0


def cmd_bench(args) -> int:
    model = load_model(args.checkpoint)
    if args.n is not None and args.n != model.n:
        raise LandmarkCountMismatch(f"Checkpoint is built for n={model.n}, bench asked for n={args.n}")
    result = benchmark(model, args.repetitions, np.random.default_rng(args.seed))
    print(f"reconstructions_per_second={result['per_second']:.1f} n={result['n']} repetitions={result['repetitions']}")
    return 0


def cmd_sweep(args) -> int:
    model = load_model(args.checkpoint)
    dataset = load_dataset(args.dataset)

    _banner(f"Noise sweep of {args.checkpoint} on {args.dataset}")
    seeds = [args.seed + k for k in range(args.repeats)]
    summary, landmarks = noise_sweep(
        model, dataset.shapes, WeakPerspectiveCamera(args.camera_scale),
        args.noise_levels, seeds, args.missing,
    )
    output_dir = Path(args.output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    summary.to_parquet(output_dir / 'noise_sweep.parquet', index=False)
    landmarks.to_parquet(output_dir / 'noise_sweep_landmarks.parquet', index=False)

    means = summary.groupby('noise_fraction')['mean_error'].mean()
    _write_json({
        'checkpoint': str(args.checkpoint),
        'dataset': str(args.dataset),
        'seeds': seeds,
        'mean_error': {f"{k:g}": float(v) for k, v in means.items()},
    }, output_dir / 'noise_sweep.json')
    for fraction, value in means.items():
        print(f"noise_fraction={fraction:g} mean_error={value:.10f}")
    return 0


# ============================================================================
# PARSER
# ============================================================================

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='reconstructor',
        description='3D shape reconstruction from 2D landmarks with a depth-regression network',
    )
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('synth', help='generate a synthetic dataset')
    p.add_argument('--kind', choices=FAMILIES, required=True)
    p.add_argument('--n', type=int, default=None)
    p.add_argument('--samples', type=int, default=300)
    p.add_argument('--joint-angle-range', type=float, default=30.0)
    p.add_argument('--amplitude', type=float, nargs=2, default=(0.2, 0.6), metavar=('LOW', 'HIGH'),
                   help='bending angle at the pole, radians')
    p.add_argument('--frequency', type=float, nargs=2, default=(0.5, 1.5), metavar=('LOW', 'HIGH'))
    p.add_argument('--aspect-jitter', type=float, default=0.1)
    p.add_argument('--vertex-jitter', type=float, default=0.01)
    p.add_argument('--output', required=True)
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser('train', help='train a model on a dataset file')
    p.add_argument('--dataset', required=True)
    p.add_argument('--validation', default=None, help='separate validation dataset file')
    p.add_argument('--config', default=None, help='JSON training config')
    p.add_argument('--epochs', type=int)
    p.add_argument('--max-iters', type=int)
    p.add_argument('--learning-rate', type=float)
    p.add_argument('--lr-decay', type=float, help='inverse-time learning rate decay per epoch')
    p.add_argument('--patience', type=int)
    p.add_argument('--batch-size', default=None, help="integer or 'full'")
    p.add_argument('--validation-factor', type=int)
    p.add_argument('--preset', choices=['cmu', 'face', 'car', 'flag', 'none'])
    p.add_argument('--noise', type=float, help='training noise fraction')
    p.add_argument('--batch-rotation', action='store_true', help='one rotation per epoch for the whole batch')
    p.add_argument('--imputer', action='store_true', help='train with the missing-landmark layer')
    p.add_argument('--missing-count', type=int)
    p.add_argument('--tau', type=int)
    p.add_argument('--output', required=True)
    p.add_argument('--history', default=None)
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser('eval', help='evaluate a checkpoint on a dataset file')
    p.add_argument('--checkpoint', required=True)
    p.add_argument('--dataset', required=True)
    p.add_argument('--noise', type=float, default=0.0)
    p.add_argument('--missing', type=int, default=0)
    p.add_argument('--camera-scale', type=float, default=1.0)
    p.add_argument('--output', default=str(config.paths.reports_dir / 'eval.json'))
    p.add_argument('--with-timing', action='store_true')
    p.add_argument('--parquet', action='store_true')
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser('reconstruct', help='reconstruct 3D shapes from a 2D landmark file')
    p.add_argument('--checkpoint', required=True)
    p.add_argument('--landmarks', required=True)
    p.add_argument('--output', required=True)
    p.add_argument('--mesh-dir', default=None, help='also write one OBJ mesh per frame')
    p.add_argument('--skeleton', action='store_true', help='add the 15-joint chain bones to the OBJ meshes')
    p.set_defaults(handler=cmd_reconstruct)

    p = sub.add_parser('bench', help='measure reconstructions per second')
    p.add_argument('--checkpoint', required=True)
    p.add_argument('--n', type=int, default=None)
    p.add_argument('--repetitions', type=int, default=5000)
    p.set_defaults(handler=cmd_bench)

    p = sub.add_parser('sweep', help='error as a function of landmark noise')
    p.add_argument('--checkpoint', required=True)
    p.add_argument('--dataset', required=True)
    p.add_argument('--noise-levels', type=float, nargs='+', default=[0.0, 0.01, 0.02, 0.03, 0.04, 0.05])
    p.add_argument('--repeats', type=int, default=5)
    p.add_argument('--missing', type=int, default=0)
    p.add_argument('--camera-scale', type=float, default=1.0)
    p.add_argument('--output-dir', default=str(config.paths.reports_dir))
    p.set_defaults(handler=cmd_sweep)

    for name, p in sub.choices.items():
        p.add_argument('--seed', type=int, default=0 if name != 'train' else None)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging()

    try:
        return args.handler(args)
    except ReconstructionError as e:
        logger.error(f"{args.command} failed: {e}")
        print(f"error={e.code} message={e}", file=sys.stderr)
        return e.exit_status
    except FileNotFoundError as e:
        logger.error(f"{args.command} failed: {e}")
        print(f"error=FILE_NOT_FOUND message={e}", file=sys.stderr)
        return EXIT_FILE_NOT_FOUND
    except Exception as e:
        logger.exception(f"{args.command} failed unexpectedly")
        print(f"error=INTERNAL message={e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
