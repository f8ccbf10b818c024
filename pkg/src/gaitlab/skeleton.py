"""The 31-joint MoCap skeleton and its named joint groups.

Joint positions follow the CMU naming. A joint's position is the start of the
bone of the same name, so ``lfemur`` sits at the hip, ``ltibia`` at the knee
and ``lfoot`` at the ankle.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

from .errors import ParameterError

JOINTS = (
    "root", "lhipjoint", "rhipjoint", "lfemur", "ltibia", "lfoot", "ltoes",
    "lowerback", "upperback", "thorax", "lowerneck", "upperneck",
    "lclavicle", "rclavicle", "head",
    "lhumerus", "lradius", "lwrist", "lhand", "lfingers", "lthumb",
    "rfemur", "rtibia", "rfoot", "rtoes",
    "rhumerus", "rradius", "rwrist", "rhand", "rfingers", "rthumb",
)
N_JOINTS = len(JOINTS)
JOINT_INDEX = {name: i for i, name in enumerate(JOINTS)}

# Body partition used for the incomplete-data experiments.
GROUPS = {
    "head": ("head",),
    "pelvis": ("root", "lhipjoint", "rhipjoint"),
    "left leg": ("lfemur", "ltibia", "lfoot", "ltoes"),
    "left arm": ("lhumerus", "lradius", "lwrist", "lhand", "lfingers", "lthumb"),
    "right leg": ("rfemur", "rtibia", "rfoot", "rtoes"),
    "right arm": ("rhumerus", "rradius", "rwrist", "rhand", "rfingers", "rthumb"),
    "torso": ("lowerback", "upperback", "thorax", "lowerneck", "upperneck",
              "lclavicle", "rclavicle"),
}

_LEGS = GROUPS["left leg"] + GROUPS["right leg"]
_ARMS = GROUPS["left arm"] + GROUPS["right arm"]

# Multi-joint exclusion sets, in report column order.
EXCLUSION_GROUPS = {
    "pelvis": GROUPS["pelvis"],
    "left leg": GROUPS["left leg"],
    "right leg": GROUPS["right leg"],
    "left arm": GROUPS["left arm"],
    "right arm": GROUPS["right arm"],
    "torso": GROUPS["torso"],
    "head and torso": GROUPS["head"] + GROUPS["torso"],
    "legs": _LEGS,
    "arms": _ARMS,
    "legs and arms": _LEGS + _ARMS,
    "lower body": GROUPS["pelvis"] + _LEGS,
    "upper body": GROUPS["torso"] + GROUPS["head"] + _ARMS,
    "all but arms": tuple(j for j in JOINTS if j not in _ARMS),
    "all but legs": tuple(j for j in JOINTS if j not in _LEGS),
}


def joint_index(joint: str | int) -> int:
    """Resolve a joint name or index to an index in ``0..30``."""
    if isinstance(joint, str):
        try:
            return JOINT_INDEX[joint]
        except KeyError:
            raise ParameterError(f"unknown joint {joint!r}") from None
    index = int(joint)
    if not 0 <= index < N_JOINTS:
        raise ParameterError(f"joint index {index} outside 0..{N_JOINTS - 1}")
    return index


@dataclass(frozen=True)
class JointMask:
    """Sorted set of joint indices kept in the raw vector."""

    included: tuple[int, ...]

    def __post_init__(self):
        included = tuple(sorted({joint_index(j) for j in self.included}))
        if not included:
            raise ParameterError("joint mask must include at least one joint")
        object.__setattr__(self, "included", included)

    @classmethod
    def full(cls) -> "JointMask":
        return cls(tuple(range(N_JOINTS)))

    @classmethod
    def excluding(cls, joints: Iterable[str | int]) -> "JointMask":
        dropped = {joint_index(j) for j in joints}
        return cls(tuple(i for i in range(N_JOINTS) if i not in dropped))

    def __len__(self) -> int:
        return len(self.included)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(JOINTS[i] for i in self.included)
