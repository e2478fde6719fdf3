"""
Exception hierarchy for the depth reconstruction package.

Every error carries a stable machine-readable ``code`` and the process
``exit_status`` the CLI uses when the error escapes a command.
"""
from typing import Optional


class ReconstructionError(ValueError):
    """Base class for all package errors"""

    code = "RECONSTRUCTION_ERROR"
    exit_status = 1


class DegenerateShape(ReconstructionError):
    """Shape or landmark set has (numerically) zero spread"""

    code = "DEGENERATE_SHAPE"
    exit_status = 65


class LengthMismatch(ReconstructionError):
    """Vector or matrix sizes do not agree"""

    code = "LENGTH_MISMATCH"
    exit_status = 65


class HeterogeneousLandmarkCount(ReconstructionError):
    """Shapes in one collection have different landmark counts"""

    code = "HETEROGENEOUS_LANDMARK_COUNT"
    exit_status = 65


class EmptyDataset(ReconstructionError):
    code = "EMPTY_DATASET"
    exit_status = 65


class MissingWithoutImputer(ReconstructionError):
    """Landmarks are missing but the model has no recurrent imputation layer"""

    code = "MISSING_WITHOUT_IMPUTER"
    exit_status = 65


class LandmarkCountMismatch(ReconstructionError):
    code = "LANDMARK_COUNT_MISMATCH"
    exit_status = 65


class FormatVersionMismatch(ReconstructionError):
    code = "FORMAT_VERSION_MISMATCH"
    exit_status = 65


class CorruptFile(ReconstructionError):
    """File is truncated, has a bad checksum or cannot be decoded"""

    code = "CORRUPT_FILE"
    exit_status = 65


class InvalidSpec(ReconstructionError):
    code = "INVALID_SPEC"
    exit_status = 64


class ConfigError(ReconstructionError):
    code = "CONFIG_ERROR"
    exit_status = 78


class ParseError(ReconstructionError):
    """Malformed text file, located by line number and field"""

    code = "PARSE_ERROR"
    exit_status = 65

    def __init__(self, message: str, line: Optional[int] = None, field: Optional[str] = None):
        self.line = line
        self.field = field
        location = []
        if line is not None:
            location.append(f"line {line}")
        if field is not None:
            location.append(f"field '{field}'")
        if location:
            message = f"{message} ({', '.join(location)})"
        super().__init__(message)


class InvariantViolation(ReconstructionError):
    """A parsed sample breaks a data invariant"""

    code = "INVARIANT_VIOLATION"
    exit_status = 65

    def __init__(self, message: str, sample_id: Optional[str] = None):
        self.sample_id = sample_id
        if sample_id is not None:
            message = f"sample '{sample_id}': {message}"
        super().__init__(message)
