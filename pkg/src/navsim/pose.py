"""Episode-relative pose bookkeeping.

An episode frame is pinned to the odometry reading at t = 0: the 3x3
homogeneous transform A maps episode coordinates to the odometry frame,
and its inverse converts subsequent readings into coordinates relative to
the start pose.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .world import Pose, wrap_angle


@dataclass(frozen=True)
class EpisodeFrame:
    chi0: Pose
    A: np.ndarray
    A_inv: np.ndarray


@dataclass(frozen=True)
class DisplacementEstimate:
    """One per-step displacement guess with an unnormalized confidence logit."""

    delta: tuple[float, float, float]
    confidence: float

    def __post_init__(self):
        dx, dy, dtheta = self.delta
        object.__setattr__(self, "delta", (dx, dy, wrap_angle(dtheta)))


def make_frame(chi0: Pose) -> EpisodeFrame:
    """Build the episode transform from the start-of-episode odometry reading."""
    c, s = math.cos(chi0.theta), math.sin(chi0.theta)
    A = np.array(
        [
            [c, -s, chi0.x],
            [s, c, chi0.y],
            [0.0, 0.0, 1.0],
        ]
    )
    # closed-form inverse of a rigid transform: R^T and -R^T t
    A_inv = np.array(
        [
            [c, s, -(c * chi0.x + s * chi0.y)],
            [-s, c, s * chi0.x - c * chi0.y],
            [0.0, 0.0, 1.0],
        ]
    )
    return EpisodeFrame(chi0, A, A_inv)


def to_episode(frame: EpisodeFrame, chi_t: Pose) -> Pose:
    """Convert an odometry reading into episode coordinates."""
    v = frame.A_inv @ np.array([chi_t.x, chi_t.y, 1.0])
    return Pose(float(v[0]), float(v[1]), wrap_angle(chi_t.theta - frame.chi0.theta))


def to_world(frame: EpisodeFrame, pose: Pose) -> Pose:
    """Inverse of to_episode: episode coordinates back to the odometry frame."""
    v = frame.A @ np.array([pose.x, pose.y, 1.0])
    return Pose(float(v[0]), float(v[1]), wrap_angle(pose.theta + frame.chi0.theta))


def fuse(estimates: list[DisplacementEstimate]) -> tuple[float, float, float]:
    """Softmax-weighted combination of displacement estimates.

    Translations combine linearly; the heading increment uses a weighted
    circular mean so estimates straddling +/-pi do not cancel.
    """
    if not estimates:
        raise ValueError("fuse requires at least one estimate")
    logits = np.array([e.confidence for e in estimates])
    w = np.exp(logits - logits.max())
    w /= w.sum()
    dx = float(np.dot(w, [e.delta[0] for e in estimates]))
    dy = float(np.dot(w, [e.delta[1] for e in estimates]))
    sin_sum = float(np.dot(w, [math.sin(e.delta[2]) for e in estimates]))
    cos_sum = float(np.dot(w, [math.cos(e.delta[2]) for e in estimates]))
    dtheta = wrap_angle(math.atan2(sin_sum, cos_sum))
    return (dx, dy, dtheta)
