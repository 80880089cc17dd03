"""Scene geometry, the agent embodiment, and the noisy actuation step.

The world is a 2.5D scene: an axis-aligned rectangular arena whose walls
are implicit, plus extruded axis-aligned boxes standing on the floor. The
agent is a disc of fixed radius carrying a forward-facing depth camera.
Collisions are *sticky*: a forward step whose swept disc would touch an
obstacle or leave the arena produces zero displacement and a bump flag.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional

import numpy as np

TWO_PI = 2.0 * math.pi


def wrap_angle(theta: float) -> float:
    """Normalize an angle to (-pi, pi]."""
    w = math.fmod(theta, TWO_PI)
    if w > math.pi:
        w -= TWO_PI
    elif w <= -math.pi:
        w += TWO_PI
    return w


@dataclass(frozen=True)
class Pose:
    """Planar position in meters plus heading in radians, wrapped to (-pi, pi]."""

    x: float
    y: float
    theta: float

    def __post_init__(self):
        object.__setattr__(self, "theta", wrap_angle(self.theta))

    def forward(self) -> tuple[float, float]:
        return math.cos(self.theta), math.sin(self.theta)

    def distance_to(self, x: float, y: float) -> float:
        return math.hypot(self.x - x, self.y - y)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.theta)


@dataclass(frozen=True)
class Box:
    """Axis-aligned extruded prism resting on the floor."""

    min_x: float
    min_y: float
    max_x: float
    max_y: float
    height: float

    def validate(self) -> None:
        if not (self.max_x > self.min_x and self.max_y > self.min_y):
            raise ValueError(f"degenerate box extent: {self}")
        if not self.height > 0:
            raise ValueError(f"box height must be positive: {self}")

    def contains_point(self, x: float, y: float) -> bool:
        return self.min_x <= x <= self.max_x and self.min_y <= y <= self.max_y


@dataclass(frozen=True)
class Rect:
    """Axis-aligned arena bounds."""

    min_x: float
    min_y: float
    max_x: float
    max_y: float

    def validate(self) -> None:
        if not ((self.max_x - self.min_x) * (self.max_y - self.min_y) > 0):
            raise ValueError(f"bounds must have positive area: {self}")

    def contains_box(self, box: Box) -> bool:
        return (
            box.min_x >= self.min_x
            and box.min_y >= self.min_y
            and box.max_x <= self.max_x
            and box.max_y <= self.max_y
        )


class Action(Enum):
    FORWARD = "Forward"
    TURN_LEFT = "TurnLeft"
    TURN_RIGHT = "TurnRight"
    STOP = "Stop"


@dataclass(frozen=True)
class AgentConfig:
    """Embodiment: disc radius, camera mount height, and the action quanta."""

    base_radius: float = 0.2
    camera_height: float = 0.6
    forward_step: float = 0.25
    turn_step: float = math.radians(15.0)

    def validate(self) -> None:
        for name in ("base_radius", "camera_height", "forward_step", "turn_step"):
            if not getattr(self, name) > 0:
                raise ValueError(f"AgentConfig.{name} must be strictly positive")


@dataclass(frozen=True)
class DepthNoiseConfig:
    """Depth sensor degradation: distance-dependent Gaussian plus dropout.

    Per-pixel sigma is sigma0 + sigma2 * z^2. Pixels go invalid with
    probability dropout_base, or dropout_edge where the local depth jumps
    by more than EDGE_STEP between neighbors.
    """

    sigma0: float = 0.01
    sigma2: float = 0.002
    dropout_base: float = 0.01
    dropout_edge: float = 0.35

    EDGE_STEP = 0.3  # meters; depth discontinuity threshold

    def validate(self) -> None:
        if self.sigma0 < 0 or self.sigma2 < 0:
            raise ValueError("depth noise sigmas must be >= 0")
        for name in ("dropout_base", "dropout_edge"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"DepthNoiseConfig.{name} must be in [0, 1]")

    def is_zero(self) -> bool:
        return (
            self.sigma0 == 0.0
            and self.sigma2 == 0.0
            and self.dropout_base == 0.0
            and self.dropout_edge == 0.0
        )


@dataclass(frozen=True)
class NoiseConfig:
    """All noise channels. An all-zero/disabled config is bit-exact noise-free."""

    actuation_sigma_lin: float = 0.01
    actuation_sigma_rot: float = math.radians(0.5)
    odometry_drift_sigma: float = 0.002  # meters per step, random direction
    depth: DepthNoiseConfig = field(default_factory=DepthNoiseConfig)
    actuation_enabled: bool = True
    odometry_enabled: bool = True
    depth_enabled: bool = True

    def validate(self) -> None:
        if self.actuation_sigma_lin < 0 or self.actuation_sigma_rot < 0:
            raise ValueError("actuation sigmas must be >= 0")
        if self.odometry_drift_sigma < 0:
            raise ValueError("odometry drift sigma must be >= 0")
        self.depth.validate()

    @staticmethod
    def disabled() -> "NoiseConfig":
        return NoiseConfig(
            actuation_sigma_lin=0.0,
            actuation_sigma_rot=0.0,
            odometry_drift_sigma=0.0,
            depth=DepthNoiseConfig(0.0, 0.0, 0.0, 0.0),
            actuation_enabled=False,
            odometry_enabled=False,
            depth_enabled=False,
        )

    def without_channels(self) -> "NoiseConfig":
        """Copy with every channel switched off (sigmas kept for reference)."""
        return replace(
            self, actuation_enabled=False, odometry_enabled=False, depth_enabled=False
        )


@dataclass(frozen=True)
class HumanBaseline:
    """Reference steps/time/length for one path, recorded by a human operator."""

    length_m: float
    time_s: float
    steps: int

    def validate(self) -> None:
        if not (self.length_m > 0 and self.time_s > 0 and self.steps > 0):
            raise ValueError(f"baseline fields must be positive: {self}")


@dataclass(frozen=True)
class EpisodeSpec:
    """One navigation task: a start pose and a goal relative to it.

    goal_rel is expressed in the start-pose frame: +x along the initial
    heading, +y 90 degrees counter-clockwise from it.
    """

    id: str
    start: Pose
    goal_rel: tuple[float, float]
    baseline: Optional[HumanBaseline] = None

    def goal_world(self) -> tuple[float, float]:
        c, s = math.cos(self.start.theta), math.sin(self.start.theta)
        gx, gy = self.goal_rel
        return (self.start.x + c * gx - s * gy, self.start.y + s * gx + c * gy)


@dataclass(frozen=True)
class Scenario:
    """Immutable world description: arena, obstacles, episodes, noise, seed."""

    bounds: Rect
    obstacles: tuple[Box, ...]
    episodes: tuple[EpisodeSpec, ...]
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    seed: int = 0
    name: str = "scenario"

    def validate(self, agent: AgentConfig) -> None:
        self.bounds.validate()
        for box in self.obstacles:
            box.validate()
            if not self.bounds.contains_box(box):
                raise ValueError(f"obstacle outside bounds: {box}")
        self.noise.validate()
        for ep in self.episodes:
            if collides(ep.start, agent, self):
                raise ValueError(f"episode {ep.id!r} start pose is not collision-free")
            gx, gy = ep.goal_world()
            if not (
                self.bounds.min_x <= gx <= self.bounds.max_x
                and self.bounds.min_y <= gy <= self.bounds.max_y
            ):
                raise ValueError(f"episode {ep.id!r} goal lies outside bounds")
            if ep.baseline is not None:
                ep.baseline.validate()

    def episode(self, episode_id: str) -> EpisodeSpec:
        for ep in self.episodes:
            if ep.id == episode_id:
                return ep
        raise KeyError(f"no episode {episode_id!r} in scenario {self.name!r}")


@dataclass(frozen=True)
class StepOutcome:
    pose: Pose
    bump: bool
    displacement: tuple[float, float, float]


# ---------------------------------------------------------------------------
# collision geometry

def _point_box_dist2(x: float, y: float, box: Box) -> float:
    dx = max(box.min_x - x, 0.0, x - box.max_x)
    dy = max(box.min_y - y, 0.0, y - box.max_y)
    return dx * dx + dy * dy


def _seg_seg_dist2(p1, p2, q1, q2) -> float:
    """Squared distance between two 2D segments."""
    d1 = (p2[0] - p1[0], p2[1] - p1[1])
    d2 = (q2[0] - q1[0], q2[1] - q1[1])
    r = (p1[0] - q1[0], p1[1] - q1[1])
    a = d1[0] * d1[0] + d1[1] * d1[1]
    e = d2[0] * d2[0] + d2[1] * d2[1]
    f = d2[0] * r[0] + d2[1] * r[1]
    if a == 0.0 and e == 0.0:
        return r[0] * r[0] + r[1] * r[1]
    if a == 0.0:
        s, t = 0.0, min(1.0, max(0.0, f / e))
    else:
        c = d1[0] * r[0] + d1[1] * r[1]
        if e == 0.0:
            t, s = 0.0, min(1.0, max(0.0, -c / a))
        else:
            b = d1[0] * d2[0] + d1[1] * d2[1]
            denom = a * e - b * b
            s = min(1.0, max(0.0, (b * f - c * e) / denom)) if denom != 0.0 else 0.0
            t = (b * s + f) / e
            if t < 0.0:
                t, s = 0.0, min(1.0, max(0.0, -c / a))
            elif t > 1.0:
                t, s = 1.0, min(1.0, max(0.0, (b - c) / a))
    px = p1[0] + s * d1[0] - (q1[0] + t * d2[0])
    py = p1[1] + s * d1[1] - (q1[1] + t * d2[1])
    return px * px + py * py


def _seg_intersects_box(p0, p1, box: Box) -> bool:
    """Liang-Barsky clip of a segment against a box footprint."""
    t0, t1 = 0.0, 1.0
    dx, dy = p1[0] - p0[0], p1[1] - p0[1]
    for p, q in (
        (-dx, p0[0] - box.min_x),
        (dx, box.max_x - p0[0]),
        (-dy, p0[1] - box.min_y),
        (dy, box.max_y - p0[1]),
    ):
        if p == 0.0:
            if q < 0.0:
                return False
        else:
            r = q / p
            if p < 0.0:
                if r > t1:
                    return False
                t0 = max(t0, r)
            else:
                if r < t0:
                    return False
                t1 = min(t1, r)
    return t0 <= t1


def _seg_box_dist2(p0, p1, box: Box) -> float:
    if _seg_intersects_box(p0, p1, box):
        return 0.0
    corners = (
        (box.min_x, box.min_y),
        (box.max_x, box.min_y),
        (box.max_x, box.max_y),
        (box.min_x, box.max_y),
    )
    return min(
        _seg_seg_dist2(p0, p1, corners[i], corners[(i + 1) % 4]) for i in range(4)
    )


def collides(pose: Pose, config: AgentConfig, scenario: Scenario) -> bool:
    """True iff the agent disc overlaps an obstacle footprint or leaves bounds.

    Contact at exactly distance == radius counts as free (open overlap test).
    """
    r = config.base_radius
    b = scenario.bounds
    if (
        pose.x - r < b.min_x
        or pose.x + r > b.max_x
        or pose.y - r < b.min_y
        or pose.y + r > b.max_y
    ):
        return True
    r2 = r * r
    return any(_point_box_dist2(pose.x, pose.y, box) < r2 for box in scenario.obstacles)


def sweep_collides(
    p0: tuple[float, float],
    p1: tuple[float, float],
    radius: float,
    scenario: Scenario,
) -> bool:
    """True iff the disc swept from p0 to p1 overlaps an obstacle or exits bounds."""
    b = scenario.bounds
    for x, y in (p0, p1):
        if (
            x - radius < b.min_x
            or x + radius > b.max_x
            or y - radius < b.min_y
            or y + radius > b.max_y
        ):
            return True
    r2 = radius * radius
    return any(_seg_box_dist2(p0, p1, box) < r2 for box in scenario.obstacles)


# ---------------------------------------------------------------------------
# actuation

_NOISE_RESAMPLE_LIMIT = 8


def _truncated_gauss(rng: np.random.Generator, sigma: float) -> float:
    """Zero-mean Gaussian clamped at 3 sigma."""
    if sigma <= 0.0:
        return 0.0
    return float(np.clip(rng.normal(0.0, sigma), -3.0 * sigma, 3.0 * sigma))


def step(
    pose: Pose,
    action: Action,
    scenario: Scenario,
    config: AgentConfig,
    noise: NoiseConfig,
    rng: np.random.Generator,
) -> StepOutcome:
    """Apply one discrete action with sticky collision semantics.

    Turns always succeed (the disc footprint does not move). A forward step
    succeeds only if the full swept disc stays clear; otherwise the pose is
    unchanged and bump is set. Actuation noise perturbs the motion magnitude
    only; a noisy motion that would collide is re-sampled a bounded number
    of times before the step degrades to a sticky bump.
    """
    if collides(pose, config, scenario):
        raise ValueError("precondition violation: pose is not collision-free")

    if action is Action.STOP:
        return StepOutcome(pose, False, (0.0, 0.0, 0.0))

    noisy = noise.actuation_enabled
    if action in (Action.TURN_LEFT, Action.TURN_RIGHT):
        magnitude = config.turn_step
        if noisy:
            magnitude += _truncated_gauss(rng, noise.actuation_sigma_rot)
        dtheta = magnitude if action is Action.TURN_LEFT else -magnitude
        new_pose = Pose(pose.x, pose.y, wrap_angle(pose.theta + dtheta))
        return StepOutcome(new_pose, False, (0.0, 0.0, dtheta))

    # Forward
    fx, fy = pose.forward()
    attempts = _NOISE_RESAMPLE_LIMIT if noisy else 1
    for _ in range(attempts):
        dist = config.forward_step
        if noisy:
            dist += _truncated_gauss(rng, noise.actuation_sigma_lin)
        nx, ny = pose.x + dist * fx, pose.y + dist * fy
        if not sweep_collides((pose.x, pose.y), (nx, ny), config.base_radius, scenario):
            new_pose = Pose(nx, ny, pose.theta)
            return StepOutcome(new_pose, False, (nx - pose.x, ny - pose.y, 0.0))
    return StepOutcome(pose, True, (0.0, 0.0, 0.0))


class Odometry:
    """Wheel-odometry surrogate: the true pose plus integrated random drift.

    Each motion step adds an isotropic Gaussian increment to the positional
    drift, sized so the RMS position error after n steps is sigma * sqrt(n).
    With drift sigma zero (or the channel disabled) readings are exact.
    """

    def __init__(self) -> None:
        self._drift_x = 0.0
        self._drift_y = 0.0

    def advance(self, noise: NoiseConfig, rng: np.random.Generator) -> None:
        """Accumulate one step's worth of drift. Call once per motion step."""
        if noise.odometry_enabled and noise.odometry_drift_sigma > 0.0:
            per_axis = noise.odometry_drift_sigma / math.sqrt(2.0)
            self._drift_x += float(rng.normal(0.0, per_axis))
            self._drift_y += float(rng.normal(0.0, per_axis))

    def read(self, true_pose: Pose) -> Pose:
        return Pose(true_pose.x + self._drift_x, true_pose.y + self._drift_y, true_pose.theta)

    @property
    def drift(self) -> tuple[float, float]:
        return (self._drift_x, self._drift_y)
