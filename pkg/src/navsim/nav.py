"""Hierarchical navigation: A* planning, local goals, and the point controller.

The global goal is the episode target. An A* plan on the inflated global
map yields a local goal at most 0.25 m ahead along the path; a deterministic
controller turns toward it in 15-degree quanta and steps forward when
roughly aligned, emitting Stop once the believed distance to the episode
goal drops under the success threshold.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import ndimage

from .mapping import GlobalMap
from .world import Action, Pose, wrap_angle

SQRT2 = math.sqrt(2.0)

_NEIGHBORS = (
    (-1, 0, 1.0),
    (1, 0, 1.0),
    (0, -1, 1.0),
    (0, 1, 1.0),
    (-1, -1, SQRT2),
    (-1, 1, SQRT2),
    (1, -1, SQRT2),
    (1, 1, SQRT2),
)


class NoPath(Exception):
    """Raised when the goal is unreachable on the current map."""


@dataclass(frozen=True)
class PlannerConfig:
    connectivity: int = 8
    local_goal_radius: float = 0.25
    goal_threshold: float = 0.2
    inflation_radius: float = 0.2  # meters; matches the agent base radius
    unknown_is_traversable: bool = True
    max_steps: int = 300
    alpha: float = 0.5  # collision penalty weight in the local reward
    reward_sign: str = "text"  # "text" rewards approach, "literal" the printed form
    bearing_tolerance: float = math.radians(7.5)  # half the turn quantum
    replan_failure_limit: int = 10
    consecutive_bump_limit: int = 25

    def validate(self) -> None:
        if self.connectivity != 8:
            raise ValueError("only 8-connected planning is supported")
        for name in ("local_goal_radius", "goal_threshold", "inflation_radius"):
            if not getattr(self, name) > 0:
                raise ValueError(f"PlannerConfig.{name} must be positive")
        if self.max_steps <= 0:
            raise ValueError("max_steps must be positive")
        if self.reward_sign not in ("text", "literal"):
            raise ValueError("reward_sign must be 'text' or 'literal'")


@dataclass
class NavState:
    """Per-episode navigation bookkeeping."""

    global_goal: Optional[tuple[int, int]] = None
    local_goal: Optional[tuple[int, int]] = None
    last_plan: list[tuple[int, int]] = field(default_factory=list)
    replan_failures: int = 0
    consecutive_bumps: int = 0
    goal_changed: bool = False

    def set_global_goal(self, cell: tuple[int, int]) -> None:
        if self.global_goal is not None and cell != self.global_goal:
            self.goal_changed = True
        self.global_goal = cell


def traversable_grid(global_map: GlobalMap, cfg: PlannerConfig) -> np.ndarray:
    """Boolean grid of cells the disc center may occupy after inflation.

    Occupied cells are binarized at 0.5 and inflated by the Euclidean
    distance transform; a cell survives only if its center is strictly
    farther than the inflation radius from every occupied cell center.
    """
    occupied = global_map.cells[0] > 0.5
    free = ~occupied
    if occupied.any():
        # the transform only matters within inflation reach of an occupied
        # cell, so run it on the occupied bounding box plus a margin
        margin = int(math.ceil(cfg.inflation_radius / global_map.resolution)) + 1
        rows = np.flatnonzero(occupied.any(axis=1))
        cols = np.flatnonzero(occupied.any(axis=0))
        r0 = max(int(rows[0]) - margin, 0)
        r1 = min(int(rows[-1]) + margin + 1, occupied.shape[0])
        c0 = max(int(cols[0]) - margin, 0)
        c1 = min(int(cols[-1]) + margin + 1, occupied.shape[1])
        dist = ndimage.distance_transform_edt(free[r0:r1, c0:c1]) * global_map.resolution
        free[r0:r1, c0:c1] = dist > cfg.inflation_radius
    if not cfg.unknown_is_traversable:
        free &= global_map.cells[1] > 0.5
    return free


def _octile(a: tuple[int, int], b: tuple[int, int]) -> float:
    dr = abs(a[0] - b[0])
    dc = abs(a[1] - b[1])
    return (dr + dc) + (SQRT2 - 2.0) * min(dr, dc)


def plan(
    global_map: GlobalMap,
    start: tuple[int, int],
    goal: tuple[int, int],
    cfg: PlannerConfig,
    grid: np.ndarray | None = None,
) -> list[tuple[int, int]]:
    """Minimal-cost 8-connected A* path on the inflated grid.

    Straight moves cost 1, diagonal moves sqrt(2); the octile heuristic is
    admissible and consistent. The start cell is always treated as
    traversable (the agent is physically there). Returns the cell sequence
    from start to goal inclusive; raises NoPath when the goal is
    unreachable. A precomputed traversability grid may be supplied.
    """
    cfg.validate()
    if grid is None:
        grid = traversable_grid(global_map, cfg)
    side = grid.shape[0]
    if not (0 <= start[0] < side and 0 <= start[1] < side):
        raise ValueError(f"start cell {start} outside the map")
    if not (0 <= goal[0] < side and 0 <= goal[1] < side):
        raise NoPath(f"goal cell {goal} outside the map")
    if not grid[goal]:
        raise NoPath(f"goal cell {goal} is not traversable")
    if start == goal:
        return [start]

    g = np.full((side, side), np.inf)
    g[start] = 0.0
    came: dict[tuple[int, int], tuple[int, int]] = {}
    closed = np.zeros((side, side), dtype=bool)
    heap: list[tuple[float, int, tuple[int, int]]] = []
    counter = 0
    heapq.heappush(heap, (_octile(start, goal), counter, start))

    while heap:
        f, _, cur = heapq.heappop(heap)
        if closed[cur]:
            continue
        if cur == goal:
            path = [cur]
            while cur in came:
                cur = came[cur]
                path.append(cur)
            path.reverse()
            return path
        closed[cur] = True
        gc = g[cur]
        for dr, dc, cost in _NEIGHBORS:
            nxt = (cur[0] + dr, cur[1] + dc)
            if not (0 <= nxt[0] < side and 0 <= nxt[1] < side):
                continue
            if not grid[nxt] or closed[nxt]:
                continue
            ng = gc + cost
            if ng < g[nxt]:
                g[nxt] = ng
                came[nxt] = cur
                counter += 1
                heapq.heappush(heap, (ng + _octile(nxt, goal), counter, nxt))
    raise NoPath(f"no route from {start} to {goal}")


def path_cost(path: list[tuple[int, int]]) -> float:
    """Arc length of a grid path in cell units."""
    total = 0.0
    for a, b in zip(path, path[1:]):
        total += SQRT2 if (a[0] != b[0] and a[1] != b[1]) else 1.0
    return total


def select_local_goal(
    path: list[tuple[int, int]],
    agent_cell: tuple[int, int],
    cfg: PlannerConfig,
    resolution: float = 0.05,
) -> tuple[int, int]:
    """Farthest path cell within the local-goal radius of arc length."""
    if not path:
        raise ValueError("select_local_goal requires a non-empty path")
    if path[0] != agent_cell:
        raise ValueError(f"path must start at the agent cell {agent_cell}, got {path[0]}")
    arc = 0.0
    chosen = path[0]
    for a, b in zip(path, path[1:]):
        arc += resolution * (SQRT2 if (a[0] != b[0] and a[1] != b[1]) else 1.0)
        if arc > cfg.local_goal_radius + 1e-12:
            break
        chosen = b
    return chosen


def should_resample(state: NavState, agent_pose: Pose, global_map: GlobalMap) -> bool:
    """Local-goal refresh conditions: goal switch, arrival, or occupancy."""
    if state.local_goal is None:
        return True
    if state.goal_changed:
        return True
    ar, ac = global_map.cell_of(agent_pose.x, agent_pose.y)
    lr, lc = state.local_goal
    if max(abs(ar - lr), abs(ac - lc)) <= 1:
        return True
    if global_map.in_bounds(state.local_goal) and global_map.cells[0, lr, lc] > 0.5:
        return True
    return False


def local_controller(
    pose_belief: Pose,
    local_goal: tuple[float, float],
    episode_goal: tuple[float, float],
    cfg: PlannerConfig,
) -> Action:
    """Deterministic point controller over the discrete action set."""
    if pose_belief.distance_to(*episode_goal) <= cfg.goal_threshold:
        return Action.STOP
    bearing = math.atan2(local_goal[1] - pose_belief.y, local_goal[0] - pose_belief.x)
    err = wrap_angle(bearing - pose_belief.theta)
    if abs(err) > cfg.bearing_tolerance:
        return Action.TURN_LEFT if err > 0 else Action.TURN_RIGHT
    return Action.FORWARD


def local_reward(d_t: float, d_prev: float, bump: bool, cfg: PlannerConfig) -> float:
    """Progress-toward-local-goal instrument with a collision penalty."""
    if d_t < 0 or d_prev < 0:
        raise ValueError("distances must be non-negative")
    penalty = cfg.alpha * (1.0 if bump else 0.0)
    if cfg.reward_sign == "literal":
        return (d_t - d_prev) - penalty
    return (d_prev - d_t) - penalty


def detect_hard_failure(state: NavState, steps: int, cfg: PlannerConfig) -> bool:
    """Stuck or out of budget: the episode terminates without success."""
    return (
        steps >= cfg.max_steps
        or state.replan_failures >= cfg.replan_failure_limit
        or state.consecutive_bumps >= cfg.consecutive_bump_limit
    )
