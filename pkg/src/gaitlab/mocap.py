"""Gait samples, labeled datasets and the canonical text format.

Coordinates are stored in meters with +y as the vertical axis. A sample is a
single pre-segmented gait cycle of ``F >= 2`` frames, each frame holding the
31 joints of :mod:`gaitlab.skeleton` as an ``(F, 31, 3)`` array.

Canonical file layout: one record per sample, a header line
``sample <label> <F>`` followed by ``F`` lines of 93 whitespace-separated
numbers (joint-major, then x y z).
"""

from __future__ import annotations

import hashlib
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DegenerateWalkError,
    EmptyDatasetError,
    ParameterError,
    ParseError,
    SchemaError,
)
from .skeleton import N_JOINTS, JointMask

logger = logging.getLogger(__name__)

DEFAULT_FRAMES = 32
DEFAULT_FRAME_RATE = 120.0
VERTICAL = 1
HORIZONTAL = (0, 2)


@dataclass(frozen=True, eq=False)
class GaitSample:
    """One gait cycle of one walker."""

    label: str
    frames: np.ndarray

    def __post_init__(self):
        frames = np.array(self.frames, dtype=np.float64)
        if frames.ndim != 3 or frames.shape[1:] != (N_JOINTS, 3):
            raise SchemaError(
                f"sample {self.label!r}: expected frames of shape (F, {N_JOINTS}, 3), "
                f"got {frames.shape}")
        if frames.shape[0] < 2:
            raise SchemaError(f"sample {self.label!r}: a gait cycle needs at least 2 frames")
        if not np.all(np.isfinite(frames)):
            raise SchemaError(f"sample {self.label!r}: non-finite coordinate")
        frames.setflags(write=False)
        object.__setattr__(self, "label", str(self.label))
        object.__setattr__(self, "frames", frames)

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    def with_frames(self, frames: np.ndarray) -> "GaitSample":
        return GaitSample(self.label, frames)

    def __eq__(self, other):
        if not isinstance(other, GaitSample):
            return NotImplemented
        return self.label == other.label and np.array_equal(self.frames, other.frames)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Dataset:
    """Ordered collection of labeled gait samples.

    Classes are kept in order of first appearance, which makes every derived
    quantity independent of hashing and stable across runs.
    """

    samples: tuple[GaitSample, ...]
    frame_rate: float = DEFAULT_FRAME_RATE
    class_counts: dict = field(init=False, repr=False)

    def __post_init__(self):
        samples = tuple(self.samples)
        if not samples:
            raise EmptyDatasetError("dataset has no samples")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "class_counts", dict(Counter(s.label for s in samples)))

    @property
    def labels(self) -> list[str]:
        return [s.label for s in self.samples]

    @property
    def classes(self) -> list[str]:
        return list(self.class_counts)

    @property
    def n_classes(self) -> int:
        return len(self.class_counts)

    @property
    def n_samples(self) -> int:
        return len(self.samples)

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.frame_rate == other.frame_rate
                and len(self.samples) == len(other.samples)
                and all(a == b for a, b in zip(self.samples, other.samples)))

    __hash__ = None

    def subset(self, labels: Iterable[str]) -> "Dataset":
        """Samples whose label is in ``labels``, original order kept."""
        keep = set(labels)
        return Dataset(tuple(s for s in self.samples if s.label in keep), self.frame_rate)

    def map(self, fn) -> "Dataset":
        return Dataset(tuple(fn(s) for s in self.samples), self.frame_rate)

    def fingerprint(self) -> str:
        """Short content hash, used as the dataset id in reports."""
        h = hashlib.sha256()
        for s in self.samples:
            h.update(s.label.encode())
            h.update(np.ascontiguousarray(s.frames).tobytes())
        return h.hexdigest()[:16]


# ---------------------------------------------------------------------------
# canonical text format
# ---------------------------------------------------------------------------

def _to_internal_axes(frames: np.ndarray, vertical_axis: str) -> np.ndarray:
    if vertical_axis == "y":
        return frames
    if vertical_axis == "z":
        # rotate -90 degrees about x: (x, y, z) -> (x, z, -y)
        return np.stack([frames[..., 0], frames[..., 2], -frames[..., 1]], axis=-1)
    raise ParameterError(f"vertical axis must be 'y' or 'z', got {vertical_axis!r}")


def parse_dataset(path, format: str = "canonical", vertical_axis: str = "y",
                  frame_rate: float = DEFAULT_FRAME_RATE) -> Dataset:
    """Read a dataset in the canonical text format."""
    if format != "canonical":
        raise ParameterError(f"unsupported dataset format {format!r}")
    text = Path(path).read_text(encoding="utf-8")
    return parse_dataset_text(text, vertical_axis=vertical_axis, frame_rate=frame_rate)


def parse_dataset_text(text: str, vertical_axis: str = "y",
                       frame_rate: float = DEFAULT_FRAME_RATE) -> Dataset:
    lines = text.split("\n")
    samples = []
    i = 0
    n = len(lines)
    while i < n:
        line = lines[i].strip()
        lineno = i + 1
        i += 1
        if not line:
            continue
        parts = line.split()
        if parts[0] != "sample" or len(parts) != 3:
            raise ParseError(f"expected 'sample <label> <F>', got {line[:40]!r}", lineno)
        label = parts[1]
        try:
            n_frames = int(parts[2])
        except ValueError:
            raise ParseError(f"frame count {parts[2]!r} is not an integer", lineno) from None
        if n_frames < 2:
            raise SchemaError(f"sample {label!r} declares {n_frames} frames, need >= 2", lineno)
        frames = np.empty((n_frames, N_JOINTS * 3))
        for f in range(n_frames):
            if i >= n:
                raise ParseError(f"sample {label!r} ends after {f} of {n_frames} frames", i)
            tokens = lines[i].split()
            lineno = i + 1
            i += 1
            if len(tokens) != N_JOINTS * 3:
                if len(tokens) % 3 == 0 and tokens:
                    raise SchemaError(
                        f"frame has {len(tokens) // 3} joints, expected {N_JOINTS}", lineno)
                raise ParseError(
                    f"expected {N_JOINTS * 3} numbers, got {len(tokens)}", lineno)
            try:
                row = [float(t) for t in tokens]
            except ValueError as exc:
                raise ParseError(str(exc), lineno) from None
            frames[f] = row
            if not np.all(np.isfinite(frames[f])):
                raise ParseError("non-finite coordinate", lineno)
        frames = _to_internal_axes(frames.reshape(n_frames, N_JOINTS, 3), vertical_axis)
        samples.append(GaitSample(label, frames))
    if not samples:
        raise EmptyDatasetError("dataset file contains no samples")
    return Dataset(tuple(samples), frame_rate)


def format_sample(sample: GaitSample) -> str:
    out = [f"sample {sample.label} {sample.n_frames}"]
    for frame in sample.frames.reshape(sample.n_frames, -1).tolist():
        out.append(" ".join(repr(v) for v in frame))
    return "\n".join(out) + "\n"


def write_dataset(dataset: Dataset, path) -> None:
    """Write ``dataset`` in the canonical format; floats roundtrip exactly."""
    for s in dataset:
        if not s.label or any(c.isspace() for c in s.label):
            raise ParameterError(f"label {s.label!r} cannot be written: empty or has whitespace")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for s in dataset:
            fh.write(format_sample(s))


# ---------------------------------------------------------------------------
# per-sample transforms
# ---------------------------------------------------------------------------

def vertical_rotation(angle: float) -> np.ndarray:
    """Proper rotation about +y by ``angle`` radians."""
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def normalize_sample(s: GaitSample) -> GaitSample:
    """Center on the mean root position and face the walk along +x.

    The heading is the principal horizontal direction of the root trajectory,
    signed so that the net first-to-last root displacement is non-negative.
    The transform is rigid, so lengths and speeds are unchanged.
    """
    root = s.frames[:, 0, :]
    center = root.mean(axis=0)
    horiz = root[:, HORIZONTAL] - center[list(HORIZONTAL)]
    cov = horiz.T @ horiz / len(horiz)
    evals, evecs = np.linalg.eigh(cov)
    if np.sqrt(max(evals[-1], 0.0)) < 1e-9:
        raise DegenerateWalkError(
            f"sample {s.label!r}: root has no horizontal displacement")
    d = evecs[:, -1]
    net = horiz[-1] - horiz[0]
    proj = float(net @ d)
    if abs(proj) > 1e-12 * (np.abs(net).max() + 1e-300):
        if proj < 0:
            d = -d
    elif d[np.flatnonzero(np.abs(d) > 1e-12)[0]] < 0:
        d = -d
    dx, dz = d
    # maps (dx, dz) onto (1, 0) and keeps y
    rot = np.array([[dx, 0.0, dz], [0.0, 1.0, 0.0], [-dz, 0.0, dx]])
    out = (s.frames - center) @ rot.T
    return s.with_frames(out)


def resample_cycle(s: GaitSample, frames: int = DEFAULT_FRAMES) -> GaitSample:
    """Linearly interpolate the cycle onto ``frames`` equally spaced instants."""
    if frames < 2:
        raise ParameterError(f"frame count must be >= 2, got {frames}")
    return s.with_frames(_resample_array(s.frames, frames))


def _resample_array(x: np.ndarray, frames: int) -> np.ndarray:
    n = x.shape[0]
    if n == frames:
        return x.copy()
    pos = np.arange(frames) * (n - 1) / (frames - 1)
    lo = np.minimum(np.floor(pos).astype(int), n - 2)
    w = (pos - lo).reshape((-1,) + (1,) * (x.ndim - 1))
    return (1.0 - w) * x[lo] + w * x[lo + 1]


def vectorize(s: GaitSample, mask: JointMask | None = None,
              frames: int = DEFAULT_FRAMES) -> np.ndarray:
    """Flatten a sample to a raw vector of length ``3 * len(mask) * frames``.

    Layout is frame-major, then joint (in mask order), then axis::

        v[(t * len(mask) + j) * 3 + a] == resampled[t, mask.included[j], a]
    """
    if frames < 2:
        raise ParameterError(f"frame count must be >= 2, got {frames}")
    mask = mask or JointMask.full()
    return _resample_array(s.frames, frames)[:, mask.included, :].reshape(-1)


def vectorize_all(samples: Sequence[GaitSample] | Dataset, mask: JointMask | None = None,
                  frames: int = DEFAULT_FRAMES) -> np.ndarray:
    """Stack raw vectors of ``samples`` into an ``(N, D)`` matrix."""
    return np.stack([vectorize(s, mask, frames) for s in samples])
