"""Seeded synthetic walkers, a desk-scale stand-in for a MoCap corpus.

Each identity gets a body (segment lengths) and a gait style (swing
amplitudes, harmonics, speed, cadence). Each sample of an identity is one
cycle with jittered phase, amplitudes and timing, captured at a random
heading and position with additive sensor noise, then normalized.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .mocap import DEFAULT_FRAME_RATE, Dataset, GaitSample, normalize_sample, vertical_rotation
from .skeleton import JOINT_INDEX, N_JOINTS


@dataclass(frozen=True)
class SynthParams:
    """Knobs of the generator.

    ``gait_spread`` scales how far identity gait styles stray from the
    population mean; 0 leaves identities differing by body proportions only.
    """

    bone_spread: float = 0.05
    scale_range: tuple[float, float] = (0.9, 1.1)
    gait_spread: float = 1.0
    phase_jitter: float = 0.12
    amp_jitter: float = 0.12
    timing_jitter: float = 0.03
    noise: float = 0.03
    frame_rate: float = DEFAULT_FRAME_RATE


# population center and half-width of each gait-style parameter
_GAIT_RANGES = {
    "duration": (1.1, 0.15),
    "speed": (1.3, 0.3),
    "hip_amp": (0.4, 0.1),
    "hip_offset": (0.05, 0.05),
    "hip_h2": (0.0, 0.08),
    "hip_h2_phase": (0.0, np.pi),
    "knee_amp": (0.8, 0.2),
    "knee_phase": (0.6, 0.4),
    "ankle_amp": (0.25, 0.1),
    "ankle_phase": (0.0, 0.6),
    "toe_out": (0.12, 0.12),
    "arm_amp": (0.35, 0.2),
    "arm_h2": (0.0, 0.08),
    "arm_abduction": (0.12, 0.08),
    "elbow_flex": (0.35, 0.25),
    "elbow_swing": (0.2, 0.15),
    "lean": (0.05, 0.08),
    "twist": (0.08, 0.06),
    "bob": (0.025, 0.015),
    "sway": (0.03, 0.02),
    "asymmetry": (1.0, 0.08),
}

_SEGMENTS = ("pelvis", "thigh", "shank", "foot", "spine", "neck", "head",
             "shoulder", "upper_arm", "forearm", "hand")


def _draw_identity(rng: np.random.Generator, p: SynthParams) -> dict:
    ident = {"scale": rng.uniform(*p.scale_range)}
    for name in _SEGMENTS:
        ident[name] = 1.0 + p.bone_spread * rng.standard_normal()
    for name, (center, half) in _GAIT_RANGES.items():
        ident[name] = center + p.gait_spread * half * rng.uniform(-1.0, 1.0)
    return ident


def _leg(hip, theta, g, side, amp):
    """Hip, knee, ankle and toe positions of one leg, each ``(F, 3)``."""
    s, seg = g["scale"], g
    alpha = g["hip_offset"] + amp["hip"] * (
        np.sin(theta) + g["hip_h2"] * np.sin(2 * theta + g["hip_h2_phase"]))
    kappa = amp["knee"] * 0.5 * (1.0 + np.cos(theta + g["knee_phase"]))
    beta = alpha - kappa
    gamma = beta + np.pi / 2 + amp["ankle"] * np.sin(theta + g["ankle_phase"])
    zero = np.zeros_like(theta)
    thigh = np.stack([np.sin(alpha), -np.cos(alpha), zero], axis=1)
    shank = np.stack([np.sin(beta), -np.cos(beta), zero], axis=1)
    toe_out = side * g["toe_out"]
    foot = np.stack([np.sin(gamma) * np.cos(toe_out), -np.cos(gamma),
                     np.sin(gamma) * np.sin(toe_out)], axis=1)
    knee = hip + 0.45 * s * seg["thigh"] * thigh
    ankle = knee + 0.43 * s * seg["shank"] * shank
    toes = ankle + 0.14 * s * seg["foot"] * foot
    return knee, ankle, toes


def _arm(shoulder, theta, g, side, amp):
    s = g["scale"]
    swing = -amp["arm"] * (np.sin(theta) + g["arm_h2"] * np.sin(2 * theta))
    ab = g["arm_abduction"]
    upper = np.stack([np.sin(swing) * np.cos(ab), -np.cos(swing) * np.cos(ab),
                      side * np.sin(ab) * np.ones_like(theta)], axis=1)
    fore_angle = swing + g["elbow_flex"] + g["elbow_swing"] * 0.5 * (1 - np.sin(theta))
    fore = np.stack([np.sin(fore_angle) * np.cos(ab), -np.cos(fore_angle) * np.cos(ab),
                     side * np.sin(ab) * np.ones_like(theta)], axis=1)
    inward = np.array([0.0, 0.0, -side])
    elbow = shoulder + 0.30 * s * g["upper_arm"] * upper
    wrist = elbow + 0.26 * s * g["forearm"] * fore
    hand = wrist + 0.07 * s * g["hand"] * fore
    fingers = hand + 0.06 * s * g["hand"] * fore
    thumb = hand + 0.035 * s * g["hand"] * fore + 0.025 * s * inward
    return elbow, wrist, hand, fingers, thumb


def _walk_cycle(g: dict, rng: np.random.Generator, p: SynthParams) -> np.ndarray:
    s = g["scale"]
    duration = g["duration"] * (1.0 + p.timing_jitter * rng.standard_normal())
    speed = g["speed"] * (1.0 + p.timing_jitter * rng.standard_normal())
    phase = rng.uniform(-p.phase_jitter, p.phase_jitter)
    n_frames = max(int(round(duration * p.frame_rate)) + 1, 2)
    t = np.arange(n_frames) / p.frame_rate
    theta = 2 * np.pi * (t / duration + phase)

    jitter = lambda: 1.0 + p.amp_jitter * rng.standard_normal()  # noqa: E731
    amp_l = {"hip": g["hip_amp"] * jitter(), "knee": g["knee_amp"] * jitter(),
             "ankle": g["ankle_amp"] * jitter(), "arm": g["arm_amp"] * jitter()}
    amp_r = {k: v * g["asymmetry"] * jitter() for k, v in amp_l.items()}

    pos = np.zeros((n_frames, N_JOINTS, 3))
    J = JOINT_INDEX
    leg_len = (0.45 * g["thigh"] + 0.43 * g["shank"]) * s
    root = np.stack([speed * t,
                     leg_len + 0.08 * s + g["bob"] * np.cos(2 * theta),
                     g["sway"] * np.sin(theta)], axis=1)
    pos[:, J["root"]] = root

    half_pelvis = 0.1 * s * g["pelvis"]
    for side, prefix, amp, offset in ((-1, "l", amp_l, 0.0), (1, "r", amp_r, np.pi)):
        hip = root + np.array([0.0, -0.08 * s, side * half_pelvis])
        pos[:, J[prefix + "hipjoint"]] = 0.5 * (root + hip)
        pos[:, J[prefix + "femur"]] = hip
        knee, ankle, toes = _leg(hip, theta + offset, g, side, amp)
        pos[:, J[prefix + "tibia"]] = knee
        pos[:, J[prefix + "foot"]] = ankle
        pos[:, J[prefix + "toes"]] = toes

    lean = g["lean"] + 0.02 * np.sin(2 * theta)
    spine_dir = np.stack([np.sin(lean), np.cos(lean), np.zeros_like(lean)], axis=1)
    spine = 0.5 * s * g["spine"]
    for name, frac in (("lowerback", 0.15), ("upperback", 0.45), ("thorax", 0.8)):
        pos[:, J[name]] = root + frac * spine * spine_dir
    thorax = pos[:, J["thorax"]]
    neck = 0.12 * s * g["neck"]
    pos[:, J["lowerneck"]] = thorax + 0.2 * spine * spine_dir
    pos[:, J["upperneck"]] = pos[:, J["lowerneck"]] + neck * spine_dir
    pos[:, J["head"]] = pos[:, J["upperneck"]] + 0.12 * s * g["head"] * spine_dir

    twist = g["twist"] * np.sin(theta)
    half_shoulder = 0.18 * s * g["shoulder"]
    for side, prefix, amp, offset in ((-1, "l", amp_l, np.pi), (1, "r", amp_r, 0.0)):
        tw = side * twist
        lateral = np.stack([np.sin(tw), np.zeros_like(tw), np.cos(tw)], axis=1) * side
        pos[:, J[prefix + "clavicle"]] = thorax + 0.15 * spine * spine_dir + 0.04 * s * lateral
        shoulder = thorax + 0.1 * spine * spine_dir + half_shoulder * lateral
        pos[:, J[prefix + "humerus"]] = shoulder
        elbow, wrist, hand, fingers, thumb = _arm(shoulder, theta + offset, g, side, amp)
        pos[:, J[prefix + "radius"]] = elbow
        pos[:, J[prefix + "wrist"]] = wrist
        pos[:, J[prefix + "hand"]] = hand
        pos[:, J[prefix + "fingers"]] = fingers
        pos[:, J[prefix + "thumb"]] = thumb

    heading = rng.uniform(0.0, 2 * np.pi)
    shift = np.array([rng.uniform(-20, 20), 0.0, rng.uniform(-20, 20)])
    pos = pos @ vertical_rotation(heading).T + shift
    return pos + p.noise * rng.standard_normal(pos.shape)


def synthesize_dataset(n_identities: int, samples_per_identity: int, seed: int,
                       params: SynthParams | None = None) -> Dataset:
    """Generate ``n_identities * samples_per_identity`` normalized cycles.

    Identities are labeled ``id000``, ``id001``, ... and samples are grouped by
    identity. The same ``seed`` always yields a bit-identical dataset.
    """
    if n_identities < 1 or samples_per_identity < 1:
        raise ParameterError("identity and sample counts must be >= 1")
    p = params or SynthParams()
    root_seq = np.random.SeedSequence(seed)
    samples = []
    for k, child in enumerate(root_seq.spawn(n_identities)):
        rng = np.random.default_rng(child)
        ident = _draw_identity(rng, p)
        label = f"id{k:03d}"
        for _ in range(samples_per_identity):
            frames = _walk_cycle(ident, rng, p)
            samples.append(normalize_sample(GaitSample(label, frames)))
    return Dataset(tuple(samples), p.frame_rate)
