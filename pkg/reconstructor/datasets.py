"""
Dataset files, 2D landmark files, synthetic shape families and mesh export.

Both text formats are line oriented and self-describing: a versioned header,
the landmark count, an item count, one block per item and an `end` trailer,
so truncated files are rejected. Values are written with 17 significant
digits, which round-trips every float exactly.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.spatial import Delaunay, QhullError
from scipy.spatial.transform import Rotation

from reconstructor.errors import (
    CorruptFile,
    FormatVersionMismatch,
    InvalidSpec,
    InvariantViolation,
    ParseError,
)
from reconstructor.geometry import Landmarks2D, Shape3D

logger = logging.getLogger(__name__)

DATASET_HEADER = '#depthlift-dataset'
LANDMARKS_HEADER = '#depthlift-landmarks'
FORMAT_VERSION = 1
MISSING_MARKER = '?'

FAMILIES = ('chain', 'sheet', 'box')

# 15-joint skeleton: pelvis, neck, head, left arm (3), right arm (3), left leg (3), right leg (3)
CHAIN_PARENTS = [-1, 0, 1, 1, 3, 4, 1, 6, 7, 0, 9, 10, 0, 12, 13]
CHAIN_OFFSETS = np.array([
    [0.0, 0.0, 0.0],
    [0.0, 0.50, 0.0],
    [0.0, 0.25, 0.0],
    [0.18, 0.0, 0.0],
    [0.0, -0.28, 0.0],
    [0.0, -0.25, 0.0],
    [-0.18, 0.0, 0.0],
    [0.0, -0.28, 0.0],
    [0.0, -0.25, 0.0],
    [0.10, 0.0, 0.0],
    [0.0, -0.42, 0.0],
    [0.0, -0.40, 0.0],
    [-0.10, 0.0, 0.0],
    [0.0, -0.42, 0.0],
    [0.0, -0.40, 0.0],
])

# Per-joint local rotation limits about (x, y, z) as fractions of the joint
# angle range. Knees only bend backwards (-z) and elbows forwards (+z), so a
# pose and its depth mirror image are never both in the family.
CHAIN_LIMITS = np.zeros((len(CHAIN_PARENTS), 3, 2))
CHAIN_LIMITS[1] = [(-0.3, 0.6), (-0.3, 0.3), (-0.3, 0.3)]
for _shoulder in (3, 6):
    CHAIN_LIMITS[_shoulder] = [(-1.0, 0.5), (-0.3, 0.3), (-0.5, 0.5)]
for _elbow in (4, 7):
    CHAIN_LIMITS[_elbow, 0] = (-1.0, 0.0)
for _hip in (9, 12):
    CHAIN_LIMITS[_hip] = [(-1.0, 0.3), (-0.2, 0.2), (-0.3, 0.3)]
for _knee in (10, 13):
    CHAIN_LIMITS[_knee, 0] = (0.0, 1.0)

# Flag: unit arc length along x, fixed height, pole at x = 0
SHEET_HEIGHT = 0.75
SHEET_TAPER = 0.5
SHEET_STEPS = 32
MAX_BEND = np.pi / 3

# Car analog: 8 body corners then 8 cabin corners, x length, y height, z width
BOX_BODY = ((-2.0, 2.0), (0.0, 0.8), (-0.8, 0.8))
BOX_CABIN = ((-1.0, 1.2), (0.8, 1.4), (-0.7, 0.7))
BOX_LANDMARKS = 16


@dataclass
class DatasetFile:
    n: int
    unit: str
    samples: List[Tuple[str, Shape3D]] = field(default_factory=list)

    @property
    def shapes(self) -> List[Shape3D]:
        return [shape for _, shape in self.samples]

    def __len__(self) -> int:
        return len(self.samples)

    def validate(self):
        for sample_id, shape in self.samples:
            if shape.n != self.n:
                raise InvariantViolation(f"has {shape.n} landmarks, dataset declares {self.n}", sample_id)


@dataclass
class SyntheticFamilySpec:
    """Parameters of a synthetic shape family"""
    kind: str
    n: int = 15
    sample_count: int = 100
    seed: int = 0
    joint_angle_range: float = 30.0
    amplitude_range: Tuple[float, float] = (0.2, 0.6)
    frequency_range: Tuple[float, float] = (0.5, 1.5)
    aspect_jitter: float = 0.1
    vertex_jitter: float = 0.01

    def validate(self):
        errors = []
        if self.kind not in FAMILIES:
            errors.append(f"kind must be one of {FAMILIES}, got '{self.kind}'")
        if self.kind == 'chain' and self.n != len(CHAIN_PARENTS):
            errors.append(f"chain family has {len(CHAIN_PARENTS)} landmarks, got n={self.n}")
        if self.kind == 'box' and self.n != BOX_LANDMARKS:
            errors.append(f"box family has {BOX_LANDMARKS} landmarks, got n={self.n}")
        if self.kind == 'sheet' and self.n < 4:
            errors.append(f"sheet family needs n >= 4, got {self.n}")
        if self.sample_count < 1:
            errors.append(f"sample_count must be >= 1, got {self.sample_count}")
        if not 0.0 <= self.joint_angle_range <= 90.0:
            errors.append(f"joint_angle_range must lie in [0, 90] degrees, got {self.joint_angle_range}")
        low, high = self.amplitude_range
        if not 0.0 <= low <= high <= MAX_BEND:
            errors.append(f"amplitude_range must satisfy 0 <= low <= high <= {MAX_BEND:.4f} rad, got {self.amplitude_range}")
        low, high = self.frequency_range
        if not 0.0 < low <= high <= 5.0:
            errors.append(f"frequency_range must satisfy 0 < low <= high <= 5, got {self.frequency_range}")
        if not 0.0 <= self.aspect_jitter <= 0.5:
            errors.append(f"aspect_jitter must lie in [0, 0.5], got {self.aspect_jitter}")
        if not 0.0 <= self.vertex_jitter <= 0.1:
            errors.append(f"vertex_jitter must lie in [0, 0.1], got {self.vertex_jitter}")
        if errors:
            raise InvalidSpec('; '.join(errors))


# ============================================================================
# SYNTHETIC FAMILIES
# ============================================================================

def _chain_sample(spec: SyntheticFamilySpec, rng: np.random.Generator) -> np.ndarray:
    angles = rng.uniform(CHAIN_LIMITS[..., 0], CHAIN_LIMITS[..., 1]) * spec.joint_angle_range
    local = Rotation.from_euler('xyz', angles, degrees=True)
    points = np.zeros((len(CHAIN_PARENTS), 3))
    world: List[Rotation] = []
    for j, parent in enumerate(CHAIN_PARENTS):
        if parent < 0:
            world.append(local[j])
            continue
        points[j] = points[parent] + world[parent].apply(CHAIN_OFFSETS[j])
        world.append(world[parent] * local[j])
    return points.T


def _sheet_grid(n: int) -> Tuple[int, int]:
    """Most square rows × cols factorization of n"""
    rows = next(r for r in range(int(np.sqrt(n)), 0, -1) if n % r == 0)
    return rows, n // rows


def _sheet_sample(spec: SyntheticFamilySpec, rng: np.random.Generator) -> np.ndarray:
    """
    Flag on a pole at x = 0, billowing towards +z.

    Each row is an inextensible curve of unit arc length whose bending angle
    starts at the sampled amplitude at the pole and oscillates along the flag;
    the amplitude tapers linearly with height. Columns foreshorten in x where
    the cloth bends.
    """
    rows, cols = _sheet_grid(spec.n)
    amplitude = rng.uniform(*spec.amplitude_range)
    frequency = rng.uniform(*spec.frequency_range)
    taper = rng.uniform(-SHEET_TAPER, SHEET_TAPER)

    arc = np.linspace(0.0, 1.0, (cols - 1) * SHEET_STEPS + 1)
    row_amplitude = amplitude * (1.0 + taper * np.linspace(-1.0, 1.0, rows))
    bend = row_amplitude[:, None] * np.cos(np.pi * frequency * arc)[None, :]
    x = cumulative_trapezoid(np.cos(bend), arc, axis=1, initial=0.0)[:, ::SHEET_STEPS]
    z = cumulative_trapezoid(np.sin(bend), arc, axis=1, initial=0.0)[:, ::SHEET_STEPS]
    y = np.repeat(np.linspace(0.0, SHEET_HEIGHT, rows)[:, None], cols, axis=1)
    return np.vstack([x.reshape(-1), y.reshape(-1), z.reshape(-1)])


def _corners(bounds) -> np.ndarray:
    (x0, x1), (y0, y1), (z0, z1) = bounds
    return np.array([[x, y, z] for x in (x0, x1) for y in (y0, y1) for z in (z0, z1)])


def _box_sample(spec: SyntheticFamilySpec, rng: np.random.Generator) -> np.ndarray:
    body = _corners(BOX_BODY) * (1.0 + rng.uniform(-spec.aspect_jitter, spec.aspect_jitter, size=3))
    cabin = _corners(BOX_CABIN) * (1.0 + rng.uniform(-spec.aspect_jitter, spec.aspect_jitter, size=3))
    points = np.vstack([body, cabin])
    size = np.ptp(points, axis=0).max()
    points = points + rng.normal(0.0, spec.vertex_jitter * size, size=points.shape)
    return points.T


_GENERATORS = {'chain': _chain_sample, 'sheet': _sheet_sample, 'box': _box_sample}


def generate_synthetic(spec: SyntheticFamilySpec) -> DatasetFile:
    """Deterministic synthetic dataset: skeletons, waving sheets or jittered boxes"""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    generator = _GENERATORS[spec.kind]
    samples = [(f"{spec.kind}-{i:05d}", Shape3D(generator(spec, rng))) for i in range(spec.sample_count)]
    logger.info(f"Generated {len(samples)} '{spec.kind}' shapes with {spec.n} landmarks")
    return DatasetFile(n=spec.n, unit='synthetic', samples=samples)


# ============================================================================
# TEXT FORMATS
# ============================================================================

def _format_row(tag: str, values: Sequence[float], missing: Optional[np.ndarray] = None) -> str:
    tokens = [
        MISSING_MARKER if missing is not None and missing[j] else format(float(v), '.17g')
        for j, v in enumerate(values)
    ]
    return f"{tag} {' '.join(tokens)}"


class _LineReader:
    """Non-empty lines with 1-based line numbers"""

    def __init__(self, text: str):
        self._lines: Iterator[Tuple[int, str]] = (
            (number, line.strip()) for number, line in enumerate(text.splitlines(), start=1) if line.strip()
        )
        self.line = 0

    def next(self, expected: str) -> List[str]:
        try:
            self.line, content = next(self._lines)
        except StopIteration:
            raise CorruptFile(f"File ends early, expected '{expected}' (truncated?)")
        return content.split()

    def keyword(self, name: str) -> List[str]:
        tokens = self.next(name)
        if tokens[0] != name:
            raise ParseError(f"Expected '{name}', found '{tokens[0]}'", self.line, name)
        return tokens[1:]

    def integer(self, name: str) -> int:
        tokens = self.keyword(name)
        try:
            (value,) = tokens
            return int(value)
        except ValueError:
            raise ParseError(f"'{name}' needs one integer", self.line, name)

    def values(self, name: str, allow_missing: bool = False) -> np.ndarray:
        out = []
        for token in self.keyword(name):
            if allow_missing and token == MISSING_MARKER:
                out.append(np.nan)
                continue
            try:
                out.append(float(token))
            except ValueError:
                raise ParseError(f"'{token}' is not a number", self.line, name)
        return np.array(out)


def _read_header(reader: _LineReader, header: str):
    tokens = reader.next(header)
    if tokens[0] != header:
        raise ParseError(f"Missing '{header}' header", reader.line, 'header')
    if len(tokens) != 2 or tokens[1] != str(FORMAT_VERSION):
        raise FormatVersionMismatch(f"{header} version {' '.join(tokens[1:]) or '?'} is not supported")


def _read_end(reader: _LineReader):
    tokens = reader.next('end')
    if tokens != ['end']:
        raise ParseError(f"Expected 'end', found '{tokens[0]}'", reader.line, 'end')


def dumps_dataset(dataset: DatasetFile) -> str:
    dataset.validate()
    lines = [
        f"{DATASET_HEADER} {FORMAT_VERSION}",
        f"n {dataset.n}",
        f"unit {dataset.unit}",
        f"samples {len(dataset.samples)}",
    ]
    for sample_id, shape in dataset.samples:
        lines.append(f"sample {sample_id}")
        lines.extend(_format_row(tag, row) for tag, row in zip('xyz', shape.coords))
    lines.append('end')
    return '\n'.join(lines) + '\n'


def loads_dataset(text: str) -> DatasetFile:
    reader = _LineReader(text)
    _read_header(reader, DATASET_HEADER)
    n = reader.integer('n')
    unit = ' '.join(reader.keyword('unit'))
    count = reader.integer('samples')

    samples = []
    for _ in range(count):
        sample_id = ' '.join(reader.keyword('sample')) or f"#{len(samples)}"
        rows = [reader.values(tag) for tag in 'xyz']
        if any(len(row) != n for row in rows):
            raise InvariantViolation(f"has rows of length {[len(r) for r in rows]}, dataset declares n={n}", sample_id)
        if not all(np.all(np.isfinite(row)) for row in rows):
            raise InvariantViolation("has non-finite coordinates", sample_id)
        try:
            samples.append((sample_id, Shape3D(np.vstack(rows))))
        except InvariantViolation as e:
            raise InvariantViolation(str(e), sample_id)
    _read_end(reader)
    return DatasetFile(n=n, unit=unit, samples=samples)


def save_dataset(dataset: DatasetFile, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_dataset(dataset), encoding='utf-8')
    logger.info(f"Dataset saved to {path} ({len(dataset)} samples, n={dataset.n})")
    return path


def load_dataset(path) -> DatasetFile:
    path = Path(path)
    dataset = loads_dataset(path.read_text(encoding='utf-8'))
    logger.info(f"Dataset loaded from {path} ({len(dataset)} samples, n={dataset.n})")
    return dataset


def dumps_landmarks(frames: Sequence[Tuple[str, Landmarks2D]]) -> str:
    if not frames:
        raise InvariantViolation("No landmark frames to write")
    n = frames[0][1].n
    lines = [f"{LANDMARKS_HEADER} {FORMAT_VERSION}", f"n {n}", f"frames {len(frames)}"]
    for frame_id, landmarks in frames:
        if landmarks.n != n:
            raise InvariantViolation(f"has {landmarks.n} landmarks, file declares {n}", frame_id)
        lines.append(f"frame {frame_id}")
        lines.append(_format_row('u', landmarks.u, ~landmarks.mask))
        lines.append(_format_row('v', landmarks.v, ~landmarks.mask))
    lines.append('end')
    return '\n'.join(lines) + '\n'


def loads_landmark_frames(text: str) -> List[Tuple[str, Landmarks2D]]:
    reader = _LineReader(text)
    _read_header(reader, LANDMARKS_HEADER)
    n = reader.integer('n')
    count = reader.integer('frames')

    frames = []
    for _ in range(count):
        frame_id = ' '.join(reader.keyword('frame')) or f"#{len(frames)}"
        u = reader.values('u', allow_missing=True)
        v = reader.values('v', allow_missing=True)
        if len(u) != n or len(v) != n:
            raise InvariantViolation(f"has rows of length {len(u)}/{len(v)}, file declares n={n}", frame_id)
        missing_u, missing_v = np.isnan(u), np.isnan(v)
        if np.any(missing_u != missing_v):
            raise InvariantViolation("marks a landmark missing in only one of u and v", frame_id)
        if not np.all(np.isfinite(u[~missing_u])) or not np.all(np.isfinite(v[~missing_v])):
            raise InvariantViolation("has non-finite coordinates", frame_id)
        try:
            frames.append((frame_id, Landmarks2D(np.vstack([u, v]), ~missing_u)))
        except InvariantViolation as e:
            raise InvariantViolation(str(e), frame_id)
    _read_end(reader)
    return frames


def save_landmarks(frames: Sequence[Tuple[str, Landmarks2D]], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_landmarks(frames), encoding='utf-8')
    logger.info(f"Landmarks saved to {path} ({len(frames)} frames)")
    return path


def load_landmark_frames(path) -> List[Tuple[str, Landmarks2D]]:
    return loads_landmark_frames(Path(path).read_text(encoding='utf-8'))


def load_landmarks2d(path) -> Landmarks2D:
    """The landmarks of a single-frame 2D file"""
    frames = load_landmark_frames(path)
    if len(frames) != 1:
        raise InvariantViolation(f"{path} holds {len(frames)} frames, expected exactly one")
    return frames[0][1]


# ============================================================================
# MESH EXPORT
# ============================================================================

def export_obj(shape: Shape3D, path, lines: Optional[Sequence[Tuple[int, int]]] = None) -> Path:
    """
    Wavefront OBJ for external viewers.

    Faces come from a Delaunay triangulation of the image-plane (x, y)
    coordinates; optional line elements (e.g. skeleton bones) are added.
    """
    path = Path(path)
    out = [f"# {shape.n} landmarks, reconstruction defined up to scale"]
    out.extend(f"v {x:.17g} {y:.17g} {z:.17g}" for x, y, z in shape.coords.T)
    try:
        triangles = Delaunay(shape.coords[:2].T).simplices
        out.extend(f"f {a + 1} {b + 1} {c + 1}" for a, b, c in triangles)
    except QhullError as e:
        logger.warning(f"No triangulation for {path.name}, writing vertices only: {e}")
    for a, b in lines or ():
        out.append(f"l {a + 1} {b + 1}")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text('\n'.join(out) + '\n', encoding='utf-8')
    return path


def chain_bones() -> List[Tuple[int, int]]:
    return [(parent, j) for j, parent in enumerate(CHAIN_PARENTS) if parent >= 0]
