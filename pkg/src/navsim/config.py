"""Configuration: hyperparameter profiles, scenario files, seeds, overrides.

Profiles bundle the agent embodiment, camera intrinsics, and the obstacle
height thresholds. Two immutable built-ins ship: ``simulation-default``
(the legacy trainer setup) and ``loconav`` (the robot-facing values).
Precedence when resolving a run is profile < scenario file < explicit
overrides, and the fully resolved configuration is echoed into every
output log.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .mapping import (
    DEFAULT_EGO_SIDE,
    DEFAULT_GLOBAL_SIDE,
    DEFAULT_POLICY_SIDE,
    DEFAULT_RESOLUTION,
)
from .nav import PlannerConfig
from .sensors import CameraIntrinsics
from .world import (
    AgentConfig,
    Box,
    DepthNoiseConfig,
    EpisodeSpec,
    HumanBaseline,
    NoiseConfig,
    Pose,
    Rect,
    Scenario,
)

DEFAULT_STEP_DURATION_S = 5.4  # seconds of wall time per discrete action


@dataclass(frozen=True)
class Profile:
    """Named bundle of embodiment + camera + mapping thresholds."""

    name: str
    agent: AgentConfig
    camera: CameraIntrinsics
    height_thresholds: tuple[float, float]

    def as_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "agent": {
                "base_radius": self.agent.base_radius,
                "camera_height": self.agent.camera_height,
                "forward_step": self.agent.forward_step,
                "turn_step_deg": round(math.degrees(self.agent.turn_step), 9),
            },
            "camera": {
                "width": self.camera.width,
                "height": self.camera.height,
                "hfov_deg": round(math.degrees(self.camera.hfov), 9),
                "vfov_deg": round(math.degrees(self.camera.vfov), 9),
                "depth_min": self.camera.depth_min,
                "depth_max": self.camera.depth_max,
                "camera_height": self.camera.camera_height,
            },
            "height_thresholds": list(self.height_thresholds),
        }


BUILTIN_PROFILES: dict[str, Profile] = {
    "simulation-default": Profile(
        name="simulation-default",
        agent=AgentConfig(camera_height=1.25),
        camera=CameraIntrinsics(
            hfov=math.radians(90.0),
            vfov=math.radians(90.0),
            depth_min=0.0,
            depth_max=10.0,
            camera_height=1.25,
        ),
        height_thresholds=(0.2, 1.5),
    ),
    "loconav": Profile(
        name="loconav",
        agent=AgentConfig(camera_height=0.6),
        camera=CameraIntrinsics(
            hfov=math.radians(57.0),
            vfov=math.radians(86.0),
            depth_min=0.0,
            depth_max=5.0,
            camera_height=0.6,
        ),
        height_thresholds=(0.3, 0.6),
    ),
}


@dataclass(frozen=True)
class ResolvedConfig:
    """Everything a run needs, after precedence resolution."""

    profile: Profile
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    resolution: float = DEFAULT_RESOLUTION
    ego_side: int = DEFAULT_EGO_SIDE
    global_side: int = DEFAULT_GLOBAL_SIDE
    policy_side: int = DEFAULT_POLICY_SIDE
    step_duration_s: float = DEFAULT_STEP_DURATION_S
    seed: int = 0

    def as_dict(self) -> dict[str, Any]:
        return {
            "profile": self.profile.as_dict(),
            "planner": {
                "connectivity": self.planner.connectivity,
                "local_goal_radius": self.planner.local_goal_radius,
                "goal_threshold": self.planner.goal_threshold,
                "inflation_radius": self.planner.inflation_radius,
                "unknown_is_traversable": self.planner.unknown_is_traversable,
                "max_steps": self.planner.max_steps,
                "alpha": self.planner.alpha,
                "reward_sign": self.planner.reward_sign,
                "bearing_tolerance_deg": round(math.degrees(self.planner.bearing_tolerance), 9),
                "replan_failure_limit": self.planner.replan_failure_limit,
                "consecutive_bump_limit": self.planner.consecutive_bump_limit,
            },
            "grid": {
                "resolution": self.resolution,
                "ego_side": self.ego_side,
                "global_side": self.global_side,
                "policy_side": self.policy_side,
            },
            "step_duration_s": self.step_duration_s,
            "seed": self.seed,
        }


# ---------------------------------------------------------------------------
# seeding

def seed_rng(seed: int) -> np.random.Generator:
    """Root deterministic generator for a run."""
    return np.random.Generator(np.random.PCG64(seed))


def episode_rng(seed: int, episode_id: str, trial_index: int) -> np.random.Generator:
    """Independent substream for one (episode, trial), stable across transports."""
    key = f"{seed}:{episode_id}:{trial_index}".encode("utf-8")
    digest = hashlib.sha256(key).digest()
    material = int.from_bytes(digest[:16], "big")
    return np.random.Generator(np.random.PCG64(material))


# ---------------------------------------------------------------------------
# scenario files

def _noise_from_dict(d: Mapping[str, Any]) -> NoiseConfig:
    depth_d = d.get("depth", {})
    depth = DepthNoiseConfig(
        sigma0=float(depth_d.get("sigma0", DepthNoiseConfig.sigma0)),
        sigma2=float(depth_d.get("sigma2", DepthNoiseConfig.sigma2)),
        dropout_base=float(depth_d.get("dropout_base", DepthNoiseConfig.dropout_base)),
        dropout_edge=float(depth_d.get("dropout_edge", DepthNoiseConfig.dropout_edge)),
    )
    cfg = NoiseConfig(
        actuation_sigma_lin=float(d.get("actuation_sigma_lin", NoiseConfig.actuation_sigma_lin)),
        actuation_sigma_rot=math.radians(
            float(d.get("actuation_sigma_rot_deg", math.degrees(NoiseConfig.actuation_sigma_rot)))
        ),
        odometry_drift_sigma=float(d.get("odometry_drift_sigma", NoiseConfig.odometry_drift_sigma)),
        depth=depth,
        actuation_enabled=bool(d.get("actuation_enabled", True)),
        odometry_enabled=bool(d.get("odometry_enabled", True)),
        depth_enabled=bool(d.get("depth_enabled", True)),
    )
    cfg.validate()
    return cfg


def noise_to_dict(n: NoiseConfig) -> dict[str, Any]:
    return {
        "actuation_sigma_lin": n.actuation_sigma_lin,
        "actuation_sigma_rot_deg": round(math.degrees(n.actuation_sigma_rot), 9),
        "odometry_drift_sigma": n.odometry_drift_sigma,
        "depth": {
            "sigma0": n.depth.sigma0,
            "sigma2": n.depth.sigma2,
            "dropout_base": n.depth.dropout_base,
            "dropout_edge": n.depth.dropout_edge,
        },
        "actuation_enabled": n.actuation_enabled,
        "odometry_enabled": n.odometry_enabled,
        "depth_enabled": n.depth_enabled,
    }


def scenario_from_dict(d: Mapping[str, Any], name: str = "scenario") -> Scenario:
    """Build a scenario from its JSON form. Angles in files are degrees."""
    b = d["bounds"]
    bounds = Rect(float(b["min_x"]), float(b["min_y"]), float(b["max_x"]), float(b["max_y"]))
    obstacles = tuple(
        Box(
            float(o["min_x"]),
            float(o["min_y"]),
            float(o["max_x"]),
            float(o["max_y"]),
            float(o["height"]),
        )
        for o in d.get("obstacles", [])
    )
    episodes = []
    for e in d.get("episodes", []):
        start_d = e["start"]
        start = Pose(
            float(start_d["x"]),
            float(start_d["y"]),
            math.radians(float(start_d.get("theta_deg", 0.0))),
        )
        baseline = None
        if e.get("baseline"):
            bd = e["baseline"]
            baseline = HumanBaseline(
                length_m=float(bd["length_m"]),
                time_s=float(bd["time_s"]),
                steps=int(bd["steps"]),
            )
        episodes.append(
            EpisodeSpec(
                id=str(e["id"]),
                start=start,
                goal_rel=(float(e["goal_rel"][0]), float(e["goal_rel"][1])),
                baseline=baseline,
            )
        )
    noise = _noise_from_dict(d.get("noise", {}))
    return Scenario(
        bounds=bounds,
        obstacles=obstacles,
        episodes=tuple(episodes),
        noise=noise,
        seed=int(d.get("seed", 0)),
        name=name,
    )


def scenario_to_dict(s: Scenario) -> dict[str, Any]:
    return {
        "bounds": {
            "min_x": s.bounds.min_x,
            "min_y": s.bounds.min_y,
            "max_x": s.bounds.max_x,
            "max_y": s.bounds.max_y,
        },
        "obstacles": [
            {
                "min_x": o.min_x,
                "min_y": o.min_y,
                "max_x": o.max_x,
                "max_y": o.max_y,
                "height": o.height,
            }
            for o in s.obstacles
        ],
        "episodes": [
            {
                "id": e.id,
                "start": {
                    "x": e.start.x,
                    "y": e.start.y,
                    "theta_deg": round(math.degrees(e.start.theta), 9),
                },
                "goal_rel": list(e.goal_rel),
                "baseline": (
                    {
                        "length_m": e.baseline.length_m,
                        "time_s": e.baseline.time_s,
                        "steps": e.baseline.steps,
                    }
                    if e.baseline
                    else None
                ),
            }
            for e in s.episodes
        ],
        "noise": noise_to_dict(s.noise),
        "seed": s.seed,
    }


def load_scenario(path: str | Path, agent: AgentConfig | None = None) -> Scenario:
    path = Path(path)
    with open(path) as fh:
        data = json.load(fh)
    scenario = scenario_from_dict(data, name=path.stem)
    scenario.validate(agent or AgentConfig())
    return scenario


def save_scenario(scenario: Scenario, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(scenario_to_dict(scenario), fh, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# override resolution

def _positive(name):
    def check(v: float) -> float:
        if not v > 0:
            raise ValueError(f"{name} must be strictly positive, got {v}")
        return v

    return check

def _non_negative(name):
    def check(v: float) -> float:
        if v < 0:
            raise ValueError(f"{name} must be >= 0, got {v}")
        return v

    return check


def _parse_bool(v: str) -> bool:
    if str(v).lower() in ("1", "true", "yes", "on"):
        return True
    if str(v).lower() in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {v!r}")


# key -> (section, attr, parse). Sections: agent, camera, thresholds, planner, grid, run
_OVERRIDE_KEYS: dict[str, tuple[str, str, Any]] = {
    "base_radius": ("agent", "base_radius", lambda v: _positive("base_radius")(float(v))),
    "camera_height": ("agent", "camera_height", lambda v: _positive("camera_height")(float(v))),
    "forward_step": ("agent", "forward_step", lambda v: _positive("forward_step")(float(v))),
    "turn_step_deg": ("agent", "turn_step", lambda v: math.radians(_positive("turn_step_deg")(float(v)))),
    "image_width": ("camera", "width", lambda v: int(_positive("image_width")(int(v)))),
    "image_height": ("camera", "height", lambda v: int(_positive("image_height")(int(v)))),
    "hfov_deg": ("camera", "hfov", lambda v: math.radians(_positive("hfov_deg")(float(v)))),
    "vfov_deg": ("camera", "vfov", lambda v: math.radians(_positive("vfov_deg")(float(v)))),
    "depth_min": ("camera", "depth_min", lambda v: _non_negative("depth_min")(float(v))),
    "depth_max": ("camera", "depth_max", lambda v: _positive("depth_max")(float(v))),
    "h_min": ("thresholds", "0", float),
    "h_max": ("thresholds", "1", float),
    "local_goal_radius": ("planner", "local_goal_radius", lambda v: _positive("local_goal_radius")(float(v))),
    "goal_threshold": ("planner", "goal_threshold", lambda v: _positive("goal_threshold")(float(v))),
    "inflation_radius": ("planner", "inflation_radius", lambda v: _positive("inflation_radius")(float(v))),
    "unknown_is_traversable": ("planner", "unknown_is_traversable", _parse_bool),
    "max_steps": ("planner", "max_steps", lambda v: int(_positive("max_steps")(int(v)))),
    "alpha": ("planner", "alpha", lambda v: _non_negative("alpha")(float(v))),
    "reward_sign": ("planner", "reward_sign", str),
    "resolution": ("grid", "resolution", lambda v: _positive("resolution")(float(v))),
    "ego_side": ("grid", "ego_side", lambda v: int(_positive("ego_side")(int(v)))),
    "global_side": ("grid", "global_side", lambda v: int(_positive("global_side")(int(v)))),
    "policy_side": ("grid", "policy_side", lambda v: int(_positive("policy_side")(int(v)))),
    "step_duration_s": ("run", "step_duration_s", lambda v: _positive("step_duration_s")(float(v))),
}


def load_config(
    profile_name: str = "loconav",
    scenario_config: Mapping[str, Any] | None = None,
    overrides: Mapping[str, str] | None = None,
    seed: int | None = None,
) -> ResolvedConfig:
    """Resolve a run configuration: profile < scenario file < overrides.

    Unknown keys raise immediately with the list of valid keys; values that
    violate an invariant raise with the invariant spelled out.
    """
    if profile_name not in BUILTIN_PROFILES:
        raise ValueError(
            f"unknown profile {profile_name!r}; valid: {sorted(BUILTIN_PROFILES)}"
        )
    profile = BUILTIN_PROFILES[profile_name]

    merged: dict[str, Any] = {}
    for source in (scenario_config or {}), (overrides or {}):
        for key, value in source.items():
            if key not in _OVERRIDE_KEYS:
                raise ValueError(
                    f"unknown config key {key!r}; valid keys: {sorted(_OVERRIDE_KEYS)}"
                )
            section, attr, parse = _OVERRIDE_KEYS[key]
            merged[key] = (section, attr, parse(value))

    agent_kw: dict[str, Any] = {}
    camera_kw: dict[str, Any] = {}
    planner_kw: dict[str, Any] = {}
    grid_kw: dict[str, Any] = {}
    run_kw: dict[str, Any] = {}
    thresholds = list(profile.height_thresholds)
    for key, (section, attr, value) in merged.items():
        if section == "agent":
            agent_kw[attr] = value
        elif section == "camera":
            camera_kw[attr] = value
        elif section == "thresholds":
            thresholds[int(attr)] = value
        elif section == "planner":
            planner_kw[attr] = value
        elif section == "grid":
            grid_kw[attr] = value
        else:
            run_kw[attr] = value

    agent = replace(profile.agent, **agent_kw) if agent_kw else profile.agent
    camera = replace(profile.camera, **camera_kw) if camera_kw else profile.camera
    agent.validate()
    camera.validate()
    if not thresholds[1] > thresholds[0]:
        raise ValueError(f"h_max must exceed h_min, got {thresholds}")
    planner = PlannerConfig(**planner_kw) if planner_kw else PlannerConfig()
    planner.validate()

    resolved = ResolvedConfig(
        profile=Profile(profile.name, agent, camera, (thresholds[0], thresholds[1])),
        planner=planner,
        resolution=grid_kw.get("resolution", DEFAULT_RESOLUTION),
        ego_side=grid_kw.get("ego_side", DEFAULT_EGO_SIDE),
        global_side=grid_kw.get("global_side", DEFAULT_GLOBAL_SIDE),
        policy_side=grid_kw.get("policy_side", DEFAULT_POLICY_SIDE),
        step_duration_s=run_kw.get("step_duration_s", DEFAULT_STEP_DURATION_S),
        seed=seed if seed is not None else 0,
    )
    if resolved.ego_side % 2 != 1:
        raise ValueError("ego_side must be odd so the agent column is central")
    if resolved.global_side % resolved.policy_side != 0:
        raise ValueError("policy_side must divide global_side")
    return resolved
