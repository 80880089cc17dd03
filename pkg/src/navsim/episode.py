"""Single-episode stepping machinery shared by the runner and the service.

An EpisodeSession owns one episode's world cursor, odometry, belief frame,
global map, and navigation state, and advances them one action at a time.
The autonomous runner and the teleoperation server both drive their
episodes exclusively through this class, so replaying an action sequence
reproduces the exact same trajectory, map, and instrument readings.

Per action the session consumes randomness in a fixed order: actuation
noise, odometry drift, then depth noise for the post-step observation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import mapping, nav, pose as posemod, sensors, world
from .config import ResolvedConfig
from .nav import NavState, NoPath
from .world import Action, Pose, Scenario, EpisodeSpec


@dataclass
class StepRecord:
    step: int
    action: Action
    pose_true: Pose
    pose_belief: Pose
    bump: bool
    reward_local: float
    reward_global: int

    def as_dict(self) -> dict:
        return {
            "type": "step",
            "step": self.step,
            "action": self.action.value,
            "pose_true": [self.pose_true.x, self.pose_true.y, self.pose_true.theta],
            "pose_belief": [self.pose_belief.x, self.pose_belief.y, self.pose_belief.theta],
            "bump": self.bump,
            "reward_local": self.reward_local,
            "reward_global": self.reward_global,
        }


class EpisodeSession:
    """One episode's full state: world cursor, belief, map, nav bookkeeping."""

    def __init__(
        self,
        scenario: Scenario,
        spec: EpisodeSpec,
        config: ResolvedConfig,
        rng: np.random.Generator,
        noise: Optional[world.NoiseConfig] = None,
    ):
        self.scenario = scenario
        self.spec = spec
        self.config = config
        self.rng = rng
        self.noise = noise if noise is not None else scenario.noise
        self.agent = config.profile.agent
        self.camera = config.profile.camera
        self.thresholds = config.profile.height_thresholds

        if world.collides(spec.start, self.agent, scenario):
            raise ValueError(f"episode {spec.id!r} start pose collides")
        gx, gy = spec.goal_world()
        if not (
            scenario.bounds.min_x <= gx <= scenario.bounds.max_x
            and scenario.bounds.min_y <= gy <= scenario.bounds.max_y
        ):
            raise ValueError(f"episode {spec.id!r} goal outside bounds")

        self.true_pose = spec.start
        self.goal_true_world = (gx, gy)
        self.odometry = world.Odometry()
        # the odometry frame coincides with the wheel-encoder frame; the
        # episode frame is pinned to the first reading (drift starts at zero)
        self.frame = posemod.make_frame(self.odometry.read(self.true_pose))
        self.pose_belief = posemod.to_episode(self.frame, self.odometry.read(self.true_pose))
        # goal in the episode frame: relative coordinates by definition
        self.goal_episode = (spec.goal_rel[0], spec.goal_rel[1])

        self.global_map = mapping.GlobalMap.blank(
            side=config.global_side, resolution=config.resolution, center=(0.0, 0.0)
        )
        self.ground_truth = mapping.rasterize_ground_truth(
            scenario,
            self.frame,
            side=config.global_side,
            resolution=config.resolution,
            origin=self.global_map.origin,
            h_min=self.thresholds[0],
        )
        self.nav_state = NavState()
        self.nav_state.set_global_goal(self.global_map.cell_of(*self.goal_episode))

        self.steps = 0
        self.done = False
        self.success = False
        self.bumped = False
        self.last_bump = False
        self.path_length_true = 0.0
        self.trajectory: list[tuple[Pose, Action, bool]] = []
        self.records: list[StepRecord] = []
        self.last_depth: Optional[sensors.DepthImage] = None
        self.reward_global_total = 0
        self.reward_local_total = 0.0
        self._observe()
        # telescoping baseline: map accuracy of the reset state (blank map
        # plus the first observation, before any action)
        self._map_accuracy = mapping.accuracy(self.global_map, self.ground_truth)
        self.initial_accuracy = self._map_accuracy

    # ------------------------------------------------------------------
    @property
    def goal_cell(self) -> tuple[int, int]:
        return self.global_map.cell_of(*self.goal_episode)

    @property
    def agent_cell(self) -> tuple[int, int]:
        return self.global_map.cell_of(self.pose_belief.x, self.pose_belief.y)

    def true_goal_distance(self) -> float:
        return self.true_pose.distance_to(*self.goal_true_world)

    def belief_goal_distance(self) -> float:
        return self.pose_belief.distance_to(*self.goal_episode)

    def goal_rel_remaining(self) -> tuple[float, float]:
        """Remaining goal offset in the agent's belief frame (ahead, left)."""
        dx = self.goal_episode[0] - self.pose_belief.x
        dy = self.goal_episode[1] - self.pose_belief.y
        c, s = math.cos(self.pose_belief.theta), math.sin(self.pose_belief.theta)
        return (c * dx + s * dy, -s * dx + c * dy)

    # ------------------------------------------------------------------
    # restored pixels at >= this fraction of depth_max are range-saturated
    # and not trusted by the mapper
    SATURATION_GATE = 0.97

    def _observe(self) -> None:
        """Sense, restore, project, and register one depth observation.

        The fully restored image is what the agent (and the observation
        stream) sees; the occupancy projection additionally requires a pixel
        to have been measured before restoration. Inpainted pixels carry no
        range evidence, and projecting them fabricates obstacles that a
        monotone map can never retract.
        """
        img = sensors.render_depth(self.true_pose, self.camera, self.scenario)
        if self.noise.depth_enabled and not self.noise.depth.is_zero():
            img = sensors.apply_depth_noise(
                img,
                self.noise.depth,
                self.rng,
                depth_min=self.camera.depth_min,
                depth_max=self.camera.depth_max,
            )
        measured = img.valid.copy()
        img = sensors.restore_depth(img)
        self.last_depth = img
        gate = self.camera.depth_max * self.SATURATION_GATE
        project_mask = img.valid & measured & (img.values < gate)
        projectable = sensors.DepthImage(img.values.copy(), project_mask)
        ego = mapping.project_depth(
            projectable,
            self.camera,
            self.agent,
            thresholds=self.thresholds,
            side=self.config.ego_side,
            resolution=self.config.resolution,
        )
        mapping.register(ego, self.pose_belief, self.global_map)

    def _local_goal_point(self) -> Optional[tuple[float, float]]:
        if self.nav_state.local_goal is None:
            return None
        return self.global_map.center_of(self.nav_state.local_goal)

    def apply(self, action: Action) -> StepRecord:
        """Advance the episode by one action and return the step record."""
        if self.done:
            raise RuntimeError("episode is over")

        lg_before = self._local_goal_point()
        d_prev = (
            self.pose_belief.distance_to(*lg_before) if lg_before is not None else 0.0
        )

        outcome = world.step(
            self.true_pose, action, self.scenario, self.agent, self.noise, self.rng
        )
        moved = math.hypot(
            outcome.pose.x - self.true_pose.x, outcome.pose.y - self.true_pose.y
        )
        self.path_length_true += moved
        self.true_pose = outcome.pose
        self.steps += 1
        self.last_bump = outcome.bump

        acc_before = self._map_accuracy
        if action is Action.STOP:
            self.done = True
            self.success = self.true_goal_distance() <= self.config.planner.goal_threshold
        else:
            self.odometry.advance(self.noise, self.rng)
            self.pose_belief = posemod.to_episode(
                self.frame, self.odometry.read(self.true_pose)
            )
            if outcome.bump:
                self.bumped = True
                self.nav_state.consecutive_bumps += 1
                # sticky bump: mark the cell the sweep aimed at and force replan
                c, s = math.cos(self.pose_belief.theta), math.sin(self.pose_belief.theta)
                blocked = self.global_map.cell_of(
                    self.pose_belief.x + self.agent.forward_step * c,
                    self.pose_belief.y + self.agent.forward_step * s,
                )
                mapping.mark_occupied(self.global_map, blocked)
                self.nav_state.local_goal = None
                self.nav_state.last_plan = []
            elif action is Action.FORWARD:
                self.nav_state.consecutive_bumps = 0
            self._observe()

        acc_after = mapping.accuracy(self.global_map, self.ground_truth)
        self._map_accuracy = acc_after
        r_global = acc_after - acc_before
        lg_after = self._local_goal_point()
        if lg_before is not None and lg_after is not None:
            d_t = self.pose_belief.distance_to(*lg_after)
            r_local = nav.local_reward(d_t, d_prev, outcome.bump, self.config.planner)
        else:
            r_local = -self.config.planner.alpha if outcome.bump else 0.0
        self.reward_global_total += r_global
        self.reward_local_total += r_local

        record = StepRecord(
            step=self.steps,
            action=action,
            pose_true=self.true_pose,
            pose_belief=self.pose_belief,
            bump=outcome.bump,
            reward_local=r_local,
            reward_global=r_global,
        )
        self.records.append(record)
        self.trajectory.append((self.true_pose, action, outcome.bump))
        return record

    def map_accuracy(self) -> int:
        return self._map_accuracy

    def trajectory_hash(self) -> str:
        """Stable digest of the exact pose/action/bump sequence."""
        import hashlib

        h = hashlib.sha256()
        for p, a, b in self.trajectory:
            h.update(
                f"{p.x!r},{p.y!r},{p.theta!r},{a.value},{int(b)};".encode("ascii")
            )
        return h.hexdigest()


class Navigator:
    """Deterministic goal-directed policy over an EpisodeSession.

    Replans from the current belief cell whenever the local goal needs
    resampling, after a bump, or when the current local goal has fallen
    behind the agent; planning failures fall back to an in-place turn so the
    camera sweeps for new map evidence.
    """

    def __init__(self, session: EpisodeSession):
        self.session = session

    def _local_goal_behind(self) -> bool:
        s = self.session
        lg = s._local_goal_point()
        if lg is None:
            return False
        bearing = math.atan2(lg[1] - s.pose_belief.y, lg[0] - s.pose_belief.x)
        err = abs(world.wrap_angle(bearing - s.pose_belief.theta))
        return err > math.pi / 2 and s.pose_belief.distance_to(*lg) >= 1e-9

    def _needs_replan(self) -> bool:
        s = self.session
        if not s.nav_state.last_plan:
            return True
        if s.last_bump:
            return True
        if nav.should_resample(s.nav_state, s.pose_belief, s.global_map):
            return True
        return self._local_goal_behind()

    def _relaxed_goal_cell(self, grid: np.ndarray) -> tuple[int, int]:
        """The goal cell, or the nearest traversable cell within the success radius."""
        s = self.session
        goal = s.goal_cell
        if s.global_map.in_bounds(goal) and grid[goal]:
            return goal
        radius_cells = int(math.ceil(s.config.planner.goal_threshold / s.config.resolution))
        best, best_d2 = None, None
        for dr in range(-radius_cells, radius_cells + 1):
            for dc in range(-radius_cells, radius_cells + 1):
                cell = (goal[0] + dr, goal[1] + dc)
                if not s.global_map.in_bounds(cell) or not grid[cell]:
                    continue
                d2 = dr * dr + dc * dc
                if best_d2 is None or d2 < best_d2:
                    best, best_d2 = cell, d2
        return best if best is not None else goal

    def decide(self) -> Action:
        s = self.session
        if s.belief_goal_distance() <= s.config.planner.goal_threshold:
            return Action.STOP

        if self._needs_replan():
            grid = nav.traversable_grid(s.global_map, s.config.planner)
            target = self._relaxed_goal_cell(grid)
            try:
                path = nav.plan(s.global_map, s.agent_cell, target, s.config.planner, grid=grid)
            except NoPath:
                s.nav_state.replan_failures += 1
                s.nav_state.local_goal = None
                s.nav_state.last_plan = []
                return Action.TURN_LEFT
            s.nav_state.replan_failures = 0
            s.nav_state.last_plan = path
            s.nav_state.goal_changed = False
            s.nav_state.local_goal = nav.select_local_goal(
                path, s.agent_cell, s.config.planner, s.config.resolution
            )

        local_goal = s._local_goal_point()
        if local_goal is None:
            return Action.TURN_LEFT
        return nav.local_controller(
            s.pose_belief, local_goal, s.goal_episode, s.config.planner
        )
