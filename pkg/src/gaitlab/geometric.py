"""Hand-crafted geometric gait features.

A feature spec is an ordered list of descriptors. Each descriptor names a
primitive signal (a bone length, a joint angle, ...) and the statistic that
collapses the per-frame signal into one number. Walk speed is a single
per-cycle value, so its statistic is ignored.

Text form, one descriptor per line::

    angle lfemur ltibia lfoot mean
    bone lfemur ltibia mean
    distance lhand rhand max
    height mean
    step max
    speed mean
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DegenerateGeometryError, ParameterError, ParseError
from .mocap import HORIZONTAL, VERTICAL, GaitSample
from .skeleton import JOINTS, joint_index

KINDS = {
    # canonical name: (text alias, joint count)
    "bone-length": ("bone", 2),
    "height": ("height", 0),
    "step-length": ("step", 0),
    "walk-speed": ("speed", 0),
    "joint-angle": ("angle", 3),
    "inter-joint-distance": ("distance", 2),
}
_ALIASES = {alias: kind for kind, (alias, _) in KINDS.items()}
_ALIASES.update({kind: kind for kind in KINDS})

STATISTICS = {"mean": np.mean, "std": np.std, "max": np.max}


@dataclass(frozen=True)
class Descriptor:
    kind: str
    joints: tuple[int, ...] = ()
    statistic: str = "mean"

    def __post_init__(self):
        kind = _ALIASES.get(self.kind)
        if kind is None:
            raise ParameterError(f"unknown feature kind {self.kind!r}")
        joints = tuple(joint_index(j) for j in self.joints)
        n_expected = KINDS[kind][1]
        if len(joints) != n_expected:
            raise ParameterError(f"{kind} takes {n_expected} joints, got {len(joints)}")
        if kind == "joint-angle" and joints[1] in (joints[0], joints[2]):
            raise ParameterError("angle vertex must differ from both end joints")
        if self.statistic not in STATISTICS:
            raise ParameterError(f"unknown statistic {self.statistic!r}")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "joints", joints)

    def to_text(self) -> str:
        names = [JOINTS[j] for j in self.joints]
        return " ".join([KINDS[self.kind][0], *names, self.statistic])


@dataclass(frozen=True)
class GeometricFeatureSpec:
    descriptors: tuple[Descriptor, ...] = ()

    def __len__(self):
        return len(self.descriptors)

    def __iter__(self):
        return iter(self.descriptors)

    @property
    def joints_used(self) -> set[int]:
        used = set()
        for d in self.descriptors:
            used.update(d.joints)
            if d.kind == "step-length":
                used.update((joint_index("lfoot"), joint_index("rfoot")))
            elif d.kind in ("walk-speed",):
                used.add(0)
            elif d.kind == "height":
                used.update(range(len(JOINTS)))
        return used

    def to_text(self) -> str:
        return "".join(d.to_text() + "\n" for d in self.descriptors)


def parse_spec(text: str) -> GeometricFeatureSpec:
    descriptors = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        try:
            descriptors.append(Descriptor(tokens[0], tuple(tokens[1:-1]), tokens[-1]))
        except (ParameterError, IndexError) as exc:
            raise ParseError(str(exc), lineno) from None
    return GeometricFeatureSpec(tuple(descriptors))


def _lower_body() -> GeometricFeatureSpec:
    ds = []
    for side in "lr":
        for a, b, c in (("lowerback", f"{side}femur", f"{side}tibia"),
                        (f"{side}femur", f"{side}tibia", f"{side}foot"),
                        (f"{side}tibia", f"{side}foot", f"{side}toes")):
            ds += [Descriptor("angle", (a, b, c), st) for st in ("mean", "std", "max")]
    ds += [Descriptor("step", (), "max"), Descriptor("speed", (), "mean")]
    return GeometricFeatureSpec(tuple(ds))


def _broad() -> GeometricFeatureSpec:
    bones = [("lfemur", "ltibia"), ("ltibia", "lfoot"), ("rfemur", "rtibia"),
             ("rtibia", "rfoot"), ("lhumerus", "lradius"), ("lradius", "lwrist"),
             ("rhumerus", "rradius"), ("rradius", "rwrist"), ("lhumerus", "rhumerus"),
             ("lfemur", "rfemur")]
    angles = [("lowerback", "lfemur", "ltibia"), ("lowerback", "rfemur", "rtibia"),
              ("lfemur", "ltibia", "lfoot"), ("rfemur", "rtibia", "rfoot"),
              ("lhumerus", "lradius", "lwrist"), ("rhumerus", "rradius", "rwrist"),
              ("lradius", "lhumerus", "lfemur"), ("rradius", "rhumerus", "rfemur")]
    distances = [("lfoot", "rfoot"), ("ltibia", "rtibia"), ("lhand", "rhand"),
                 ("lwrist", "lfemur"), ("rwrist", "rfemur"), ("head", "root")]
    ds = [Descriptor("bone", b, "mean") for b in bones]
    ds.append(Descriptor("height", (), "mean"))
    for a in angles:
        ds += [Descriptor("angle", a, st) for st in ("mean", "std", "max")]
    for pair in distances:
        ds += [Descriptor("distance", pair, st) for st in ("mean", "std", "max")]
    return GeometricFeatureSpec(tuple(ds))


PRESETS = {
    "preset-lower-body": _lower_body(),
    "preset-broad": _broad(),
}


def load_spec(name_or_path: str) -> GeometricFeatureSpec:
    """Resolve a preset name or read a spec file."""
    if name_or_path in PRESETS:
        return PRESETS[name_or_path]
    return parse_spec(Path(name_or_path).read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------

def distance_signal(s: GaitSample, j1, j2) -> np.ndarray:
    a, b = joint_index(j1), joint_index(j2)
    return np.linalg.norm(s.frames[:, a] - s.frames[:, b], axis=1)


def bone_length(s: GaitSample, j1, j2) -> float:
    """Mean over frames of the distance between two joints."""
    return float(distance_signal(s, j1, j2).mean())


def height_signal(s: GaitSample) -> np.ndarray:
    y = s.frames[:, :, VERTICAL]
    return y.max(axis=1) - y.min(axis=1)


def foot_distance_signal(s: GaitSample, left="lfoot", right="rfoot") -> np.ndarray:
    h = list(HORIZONTAL)
    diff = s.frames[:, joint_index(left), h] - s.frames[:, joint_index(right), h]
    return np.linalg.norm(diff, axis=1)


def walk_speed(s: GaitSample, frame_rate: float | None) -> float:
    if frame_rate is None:
        raise ConfigurationError("walk speed needs the dataset frame rate")
    if frame_rate <= 0:
        raise ConfigurationError(f"frame rate must be positive, got {frame_rate}")
    h = list(HORIZONTAL)
    disp = np.linalg.norm(s.frames[-1, 0, h] - s.frames[0, 0, h])
    return float(disp / ((s.n_frames - 1) / frame_rate))


def step_length_and_speed(s: GaitSample, frame_rate: float | None) -> tuple[float, float]:
    """Longest horizontal foot separation, and mean root speed over the cycle."""
    speed = walk_speed(s, frame_rate)
    return float(foot_distance_signal(s).max()), speed


def joint_angle_signal(s: GaitSample, a, b, c) -> np.ndarray:
    """Per-frame angle at vertex ``b`` between rays b->a and b->c, in [0, pi]."""
    ia, ib, ic = joint_index(a), joint_index(b), joint_index(c)
    if ib in (ia, ic):
        raise ParameterError("angle vertex must differ from both end joints")
    u = s.frames[:, ia] - s.frames[:, ib]
    v = s.frames[:, ic] - s.frames[:, ib]
    nu = np.linalg.norm(u, axis=1)
    nv = np.linalg.norm(v, axis=1)
    bad = np.flatnonzero((nu == 0) | (nv == 0))
    if bad.size:
        raise DegenerateGeometryError(
            f"zero-length limb vector for angle {JOINTS[ia]}-{JOINTS[ib]}-{JOINTS[ic]}",
            frame=int(bad[0]))
    cross = np.linalg.norm(np.cross(u, v), axis=1)
    dot = np.einsum("ij,ij->i", u, v)
    return np.arctan2(cross, dot)


def descriptor_value(s: GaitSample, d: Descriptor, frame_rate: float | None) -> float:
    if d.kind == "walk-speed":
        return walk_speed(s, frame_rate)
    if d.kind in ("bone-length", "inter-joint-distance"):
        signal = distance_signal(s, *d.joints)
    elif d.kind == "joint-angle":
        signal = joint_angle_signal(s, *d.joints)
    elif d.kind == "height":
        signal = height_signal(s)
    else:
        signal = foot_distance_signal(s)
    return float(STATISTICS[d.statistic](signal))


def extract_geometric(s: GaitSample, spec: GeometricFeatureSpec,
                      frame_rate: float | None = None) -> np.ndarray:
    """One value per descriptor, in spec order."""
    return np.array([descriptor_value(s, d, frame_rate) for d in spec], dtype=np.float64)
