"""
Configuration Management Module
Centralized configuration for the depth reconstruction pipeline
"""
import os
import json
import hashlib
import logging
from pathlib import Path
from typing import Optional, Tuple, Dict, Any, List
from dataclasses import dataclass, field, asdict, fields, replace
from dotenv import load_dotenv

from reconstructor.errors import ConfigError
from reconstructor.imputer import linear_lambda

# Load environment variables
load_dotenv()

Range = Tuple[float, float]

# Rotation ranges in degrees (x, y, z) per dataset family
AUGMENTATION_PRESETS: Dict[str, Tuple[Range, Range, Range]] = {
    'cmu': ((-20.0, 20.0), (-20.0, 20.0), (-180.0, 180.0)),
    'face': ((-20.0, 20.0), (-20.0, 20.0), (-60.0, 60.0)),
    'car': ((-20.0, 20.0), (-20.0, 20.0), (-180.0, 180.0)),
    'flag': ((-20.0, 20.0), (-20.0, 20.0), (-180.0, 180.0)),
    'none': ((0.0, 0.0), (0.0, 0.0), (0.0, 0.0)),
}

MAX_NOISE_FRACTION = 0.2


def _check_range(name: str, value: Range, errors: List[str], positive: bool = False):
    low, high = value
    if low > high:
        errors.append(f"{name} is not ordered: {value}")
    if positive and low <= 0:
        errors.append(f"{name} must be positive: {value}")


def _as_range(value) -> Range:
    low, high = value
    return (float(low), float(high))


@dataclass
class AugmentationConfig:
    """Random-view augmentation settings"""
    rx_range: Range = (-20.0, 20.0)
    ry_range: Range = (-20.0, 20.0)
    rz_range: Range = (-180.0, 180.0)
    noise_fraction: float = 0.0
    camera_lambda_range: Range = (0.5, 2.0)
    seed: int = 0
    rotate_per_shape: bool = True

    @classmethod
    def preset(cls, name: str, **overrides):
        """Build the rotation ranges of a named dataset family"""
        if name not in AUGMENTATION_PRESETS:
            raise ConfigError(
                f"Unknown augmentation preset '{name}', expected one of {sorted(AUGMENTATION_PRESETS)}"
            )
        rx, ry, rz = AUGMENTATION_PRESETS[name]
        return cls(rx_range=rx, ry_range=ry, rz_range=rz, **overrides)

    @classmethod
    def from_env(cls):
        """Create from environment variables"""
        return cls.preset(
            os.getenv('AUGMENT_PRESET', 'cmu'),
            noise_fraction=float(os.getenv('AUGMENT_NOISE', 0.0)),
            seed=int(os.getenv('AUGMENT_SEED', 0)),
        )

    @classmethod
    def from_dict(cls, data: Dict[str, Any]):
        data = dict(data)
        preset = data.pop('preset', None)
        base = cls.preset(preset) if preset else cls()
        _reject_unknown(cls, data, 'augmentation')
        for key in ('rx_range', 'ry_range', 'rz_range', 'camera_lambda_range'):
            if key in data:
                data[key] = _as_range(data[key])
        return replace(base, **data)

    def validate(self) -> List[str]:
        errors = []
        for name in ('rx_range', 'ry_range', 'rz_range'):
            _check_range(name, getattr(self, name), errors)
        _check_range('camera_lambda_range', self.camera_lambda_range, errors, positive=True)
        if not 0.0 <= self.noise_fraction <= MAX_NOISE_FRACTION:
            errors.append(f"noise_fraction must lie in [0, {MAX_NOISE_FRACTION}]: {self.noise_fraction}")
        return errors


@dataclass
class ImputerConfig:
    """Recurrent missing-landmark layer settings"""
    enabled: bool = False
    tau: int = 3
    lambda_weights: Optional[Tuple[float, ...]] = None
    activation: str = 'identity'
    missing_count: int = 1
    depth_weight: float = 1.0

    @property
    def weights(self) -> Tuple[float, ...]:
        """Step weights, linearly increasing and summing to one unless given"""
        if self.lambda_weights is not None:
            return tuple(self.lambda_weights)
        return linear_lambda(self.tau)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]):
        data = dict(data)
        _reject_unknown(cls, data, 'imputer')
        if data.get('lambda_weights') is not None:
            data['lambda_weights'] = tuple(float(x) for x in data['lambda_weights'])
        return cls(**data)

    def validate(self) -> List[str]:
        errors = []
        if self.tau < 1:
            errors.append(f"imputer.tau must be >= 1: {self.tau}")
        if self.activation not in ('identity', 'tanh'):
            errors.append(f"imputer.activation must be 'identity' or 'tanh': {self.activation}")
        if self.missing_count < 0:
            errors.append(f"imputer.missing_count must be >= 0: {self.missing_count}")
        if self.depth_weight <= 0:
            errors.append(f"imputer.depth_weight must be positive: {self.depth_weight}")
        if self.lambda_weights is not None and len(self.lambda_weights) != self.tau:
            errors.append("imputer.lambda_weights must have tau entries")
        return errors


@dataclass
class TrainingConfig:
    """Training schedule, optimizer and early-stopping settings"""
    epochs: int = 2000
    max_iters_per_epoch: int = 300
    learning_rate: float = 0.01
    learning_rate_decay: float = 0.02
    patience: int = 10
    augmentation: AugmentationConfig = field(default_factory=AugmentationConfig)
    imputer: ImputerConfig = field(default_factory=ImputerConfig)
    seed: int = 0
    batch_size: Optional[int] = None
    validation_fraction: float = 0.2
    validation_factor: int = 20
    rmsprop_decay: float = 0.9
    rmsprop_epsilon: float = 1e-8
    hidden_layers: int = 4
    log_every: int = 50

    @property
    def missing_data(self) -> bool:
        return self.imputer.enabled and self.imputer.missing_count > 0

    def learning_rate_at(self, epoch: int) -> float:
        """Inverse-time decay of the initial rate, epochs counted from 1"""
        return self.learning_rate / (1.0 + self.learning_rate_decay * (epoch - 1))

    @classmethod
    def from_env(cls):
        """Create from environment variables"""
        batch = os.getenv('TRAIN_BATCH_SIZE', 'full')
        return cls(
            epochs=int(os.getenv('TRAIN_EPOCHS', 2000)),
            max_iters_per_epoch=int(os.getenv('TRAIN_MAX_ITERS', 300)),
            learning_rate=float(os.getenv('TRAIN_LEARNING_RATE', 0.01)),
            learning_rate_decay=float(os.getenv('TRAIN_LR_DECAY', 0.02)),
            patience=int(os.getenv('TRAIN_PATIENCE', 10)),
            augmentation=AugmentationConfig.from_env(),
            seed=int(os.getenv('TRAIN_SEED', 0)),
            batch_size=None if batch == 'full' else int(batch),
            validation_factor=int(os.getenv('TRAIN_VALIDATION_FACTOR', 20)),
        )

    @classmethod
    def from_dict(cls, data: Dict[str, Any]):
        data = dict(data)
        augmentation = AugmentationConfig.from_dict(data.pop('augmentation', {}))
        imputer = ImputerConfig.from_dict(data.pop('imputer', {}))
        _reject_unknown(cls, data, 'training')
        if data.get('batch_size') == 'full':
            data['batch_size'] = None
        return cls(augmentation=augmentation, imputer=imputer, **data)

    @classmethod
    def from_file(cls, path) -> 'TrainingConfig':
        """Load a JSON config file whose keys mirror the dataclass fields"""
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding='utf-8'))
        except json.JSONDecodeError as e:
            raise ConfigError(f"Config file {path} is not valid JSON: {e}")
        if not isinstance(data, dict):
            raise ConfigError(f"Config file {path} must hold a JSON object")
        return cls.from_dict(data)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data['batch_size'] = 'full' if self.batch_size is None else self.batch_size
        data['imputer']['lambda_weights'] = list(self.imputer.weights)
        return data

    def config_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(',', ':'))
        return hashlib.sha256(canonical.encode('utf-8')).hexdigest()

    def validate(self) -> bool:
        """Validate configuration"""
        errors = []
        if self.epochs < 1:
            errors.append(f"epochs must be >= 1: {self.epochs}")
        if self.max_iters_per_epoch < 1:
            errors.append(f"max_iters_per_epoch must be >= 1: {self.max_iters_per_epoch}")
        if self.learning_rate <= 0:
            errors.append(f"learning_rate must be positive: {self.learning_rate}")
        if self.learning_rate_decay < 0:
            errors.append(f"learning_rate_decay must be >= 0: {self.learning_rate_decay}")
        if self.patience < 1:
            errors.append(f"patience must be >= 1: {self.patience}")
        if self.batch_size is not None and self.batch_size < 1:
            errors.append(f"batch_size must be >= 1 or 'full': {self.batch_size}")
        if not 0.0 < self.validation_fraction < 1.0:
            errors.append(f"validation_fraction must lie in (0, 1): {self.validation_fraction}")
        if self.validation_factor < 1:
            errors.append(f"validation_factor must be >= 1: {self.validation_factor}")
        if not 0.0 < self.rmsprop_decay < 1.0:
            errors.append(f"rmsprop_decay must lie in (0, 1): {self.rmsprop_decay}")
        if self.rmsprop_epsilon <= 0:
            errors.append(f"rmsprop_epsilon must be positive: {self.rmsprop_epsilon}")
        if self.hidden_layers < 0:
            errors.append(f"hidden_layers must be >= 0: {self.hidden_layers}")
        errors.extend(self.augmentation.validate())
        errors.extend(self.imputer.validate())

        if errors:
            raise ConfigError(f"Configuration errors: {', '.join(errors)}")

        return True


def _reject_unknown(cls, data: Dict[str, Any], section: str):
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"Unknown {section} config keys: {', '.join(unknown)}")


@dataclass
class PathConfig:
    """Path configuration"""
    project_root: Path
    data_dir: Path
    models_dir: Path
    reports_dir: Path
    logs_dir: Path

    @classmethod
    def from_env(cls):
        """Create from environment variables"""
        project_root = Path(__file__).parent.parent

        return cls(
            project_root=project_root,
            data_dir=Path(os.getenv('DATA_DIR', project_root / 'data')),
            models_dir=Path(os.getenv('MODELS_DIR', project_root / 'models')),
            reports_dir=Path(os.getenv('REPORTS_DIR', project_root / 'reports')),
            logs_dir=Path(os.getenv('LOGS_DIR', project_root / 'logs'))
        )

    def ensure_dirs(self):
        """Create directories if they don't exist"""
        for dir_path in [self.data_dir, self.models_dir, self.reports_dir, self.logs_dir]:
            dir_path.mkdir(parents=True, exist_ok=True)


@dataclass
class LoggingConfig:
    """Logging configuration"""
    level: str
    format: str
    log_file: str

    @classmethod
    def from_env(cls):
        """Create from environment variables"""
        return cls(
            level=os.getenv('LOG_LEVEL', 'INFO'),
            format=os.getenv(
                'LOG_FORMAT',
                '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
            ),
            log_file=os.getenv('LOG_FILE', 'reconstructor.log')
        )


class Config:
    """Main configuration class"""

    def __init__(self):
        self.paths = PathConfig.from_env()
        self.logging = LoggingConfig.from_env()
        self.training = TrainingConfig.from_env()

    def validate(self) -> bool:
        """Validate configuration"""
        errors = []

        if self.logging.level.upper() not in logging._nameToLevel:
            errors.append(f"LOG_LEVEL '{self.logging.level}' is not a logging level")

        try:
            self.training.validate()
        except ConfigError as e:
            errors.append(str(e))

        if errors:
            raise ConfigError(f"Configuration errors: {', '.join(errors)}")

        return True


def configure_logging(logging_config: Optional[LoggingConfig] = None,
                      logs_dir: Optional[Path] = None):
    """Send records to a log file under logs/ and to the console"""
    logging_config = logging_config or config.logging
    logs_dir = Path(logs_dir or config.paths.logs_dir)
    logs_dir.mkdir(parents=True, exist_ok=True)

    logging.basicConfig(
        level=logging_config.level.upper(),
        format=logging_config.format,
        handlers=[
            logging.FileHandler(logs_dir / logging_config.log_file),
            logging.StreamHandler()
        ],
        force=True
    )


# Global configuration instance
config = Config()


if __name__ == "__main__":
    # Test configuration
    print("=== Configuration Test ===")
    print(f"Data Dir: {config.paths.data_dir}")
    print(f"Models Dir: {config.paths.models_dir}")
    print(f"Epochs: {config.training.epochs}")
    print(f"Augmentation: {config.training.augmentation}")
    print(f"Logs Dir: {config.paths.logs_dir}")

    try:
        config.validate()
        print("✅ Configuration is valid")
    except ConfigError as e:
        print(f"❌ Configuration error: {e}")
