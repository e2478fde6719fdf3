"""
Checkpoint persistence.

A checkpoint is one JSON document: format tag, version, landmark count,
layer widths, input ordering, every weight matrix row-major, the optional
imputer block and training metadata, plus a SHA-256 checksum of the
canonical payload. Floats are written with their shortest round-trip
representation, so loading reproduces every parameter bit for bit.
"""
import json
import hashlib
import logging
from pathlib import Path
from typing import Any, Dict

import numpy as np

from reconstructor.errors import CorruptFile, FormatVersionMismatch
from reconstructor.imputer import ImputerParams
from reconstructor.net import NetworkParams
from reconstructor.pipeline import TrainedModel

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = 'depthlift-checkpoint'
CHECKPOINT_VERSION = 1


def _checksum(payload: Dict[str, Any]) -> str:
    canonical = json.dumps(payload, sort_keys=True, separators=(',', ':'))
    return hashlib.sha256(canonical.encode('utf-8')).hexdigest()


def model_to_dict(model: TrainedModel) -> Dict[str, Any]:
    payload = {
        'format': CHECKPOINT_FORMAT,
        'version': CHECKPOINT_VERSION,
        'n': model.n,
        'dims': model.net.dims,
        'input_ordering': model.input_ordering,
        'layers': [
            {'weights': w.tolist(), 'bias': b.tolist()}
            for w, b in zip(model.net.weights, model.net.biases)
        ],
        'imputer': None,
        'metadata': model.metadata,
    }
    if model.imputer is not None:
        payload['imputer'] = {
            'tau': model.imputer.tau,
            'lambda_weights': list(model.imputer.lambda_weights),
            'activation': model.imputer.activation,
            'weights': model.imputer.weights.tolist(),
        }
    payload['checksum'] = _checksum(payload)
    return payload


def save_model(model: TrainedModel, path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        text = json.dumps(model_to_dict(model), sort_keys=True, indent=1)
        path.write_text(text + '\n', encoding='utf-8')
        logger.info(f"Checkpoint saved to {path} (n={model.n}, imputer={model.imputer is not None})")
        return path
    except OSError as e:
        logger.error(f"Error saving checkpoint to {path}: {e}")
        raise


def model_from_dict(payload: Dict[str, Any]) -> TrainedModel:
    if not isinstance(payload, dict) or payload.get('format') != CHECKPOINT_FORMAT:
        raise CorruptFile("Not a checkpoint file")
    if payload.get('version') != CHECKPOINT_VERSION:
        raise FormatVersionMismatch(
            f"Checkpoint version {payload.get('version')} is not supported (expected {CHECKPOINT_VERSION})"
        )
    stored = payload.pop('checksum', None)
    if stored != _checksum(payload):
        raise CorruptFile("Checkpoint checksum does not match its content")

    try:
        weights = [np.array(layer['weights'], dtype=np.float64) for layer in payload['layers']]
        biases = [np.array(layer['bias'], dtype=np.float64) for layer in payload['layers']]
        net = NetworkParams(weights, biases)
        imputer = None
        if payload['imputer'] is not None:
            block = payload['imputer']
            imputer = ImputerParams(
                np.array(block['weights'], dtype=np.float64),
                block['tau'],
                tuple(block['lambda_weights']),
                block['activation'],
            )
        model = TrainedModel(net, imputer, payload['input_ordering'], payload['metadata'])
    except (KeyError, TypeError, ValueError) as e:
        raise CorruptFile(f"Checkpoint content is inconsistent: {e}")

    if net.dims != payload['dims'] or model.n != payload['n']:
        raise CorruptFile(f"Checkpoint header (n={payload['n']}, dims={payload['dims']}) disagrees with its layers")
    return model


def load_model(path) -> TrainedModel:
    path = Path(path)
    text = path.read_text(encoding='utf-8')
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as e:
        logger.error(f"Checkpoint {path} cannot be decoded: {e}")
        raise CorruptFile(f"Checkpoint {path} is truncated or not valid JSON")
    model = model_from_dict(payload)
    logger.info(f"Checkpoint loaded from {path} (n={model.n})")
    return model
