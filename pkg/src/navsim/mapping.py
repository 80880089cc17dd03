"""Occupancy mapping: depth projection, map registration, and map instruments.

Grid conventions
----------------
All grids are indexed ``[channel, row, col]`` with channel 0 = occupied and
channel 1 = explored. For the global map, row tracks the episode-frame +y
axis and col the +x axis; ``origin`` holds the world-frame coordinates of
the *center* of cell (0, 0), so ``cell = round((p - origin) / resolution)``.
Egocentric maps use (j, i): j counts cells straight ahead of the agent
(agent at j = 0, the bottom row when drawn facing up) and i counts cells to
the agent's right around the central column i = V // 2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .pose import EpisodeFrame
from .sensors import CameraIntrinsics, DepthImage
from .world import AgentConfig, Pose, Scenario

DEFAULT_RESOLUTION = 0.05
DEFAULT_EGO_SIDE = 101
DEFAULT_GLOBAL_SIDE = 480
DEFAULT_POLICY_SIDE = 240
DEFAULT_HEIGHT_THRESHOLDS = (0.3, 0.6)


@dataclass
class EgoMap:
    """Agent-centric occupancy patch built from a single observation."""

    cells: np.ndarray  # float32 (2, V, V)
    resolution: float = DEFAULT_RESOLUTION

    def __post_init__(self):
        side = self.cells.shape[1]
        if self.cells.shape != (2, side, side):
            raise ValueError("ego map must be (2, V, V)")
        if side % 2 != 1:
            raise ValueError("ego side must be odd so the agent column is central")

    @property
    def side(self) -> int:
        return self.cells.shape[1]

    @staticmethod
    def blank(side: int = DEFAULT_EGO_SIDE, resolution: float = DEFAULT_RESOLUTION) -> "EgoMap":
        return EgoMap(np.zeros((2, side, side), dtype=np.float32), resolution)


@dataclass
class GlobalMap:
    """Episode-frame map accumulated by max-fusion of registered ego maps."""

    cells: np.ndarray  # float32 (2, W, W)
    visited: np.ndarray  # bool (W, W)
    origin: tuple[float, float]  # world coords of cell (0, 0) center
    resolution: float = DEFAULT_RESOLUTION
    agent_cell: tuple[int, int] = (0, 0)
    clip_warnings: int = 0

    @property
    def side(self) -> int:
        return self.cells.shape[1]

    @staticmethod
    def blank(
        side: int = DEFAULT_GLOBAL_SIDE,
        resolution: float = DEFAULT_RESOLUTION,
        center: tuple[float, float] = (0.0, 0.0),
    ) -> "GlobalMap":
        """Fresh all-unknown map whose central cell sits at ``center``."""
        half = side // 2
        origin = (center[0] - half * resolution, center[1] - half * resolution)
        return GlobalMap(
            cells=np.zeros((2, side, side), dtype=np.float32),
            visited=np.zeros((side, side), dtype=bool),
            origin=origin,
            resolution=resolution,
            agent_cell=(half, half),
        )

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        c = int(round((x - self.origin[0]) / self.resolution))
        r = int(round((y - self.origin[1]) / self.resolution))
        return (r, c)

    def center_of(self, cell: tuple[int, int]) -> tuple[float, float]:
        r, c = cell
        return (self.origin[0] + c * self.resolution, self.origin[1] + r * self.resolution)

    def in_bounds(self, cell: tuple[int, int]) -> bool:
        r, c = cell
        return 0 <= r < self.side and 0 <= c < self.side

    def copy(self) -> "GlobalMap":
        return GlobalMap(
            self.cells.copy(),
            self.visited.copy(),
            self.origin,
            self.resolution,
            self.agent_cell,
            self.clip_warnings,
        )


@dataclass(frozen=True)
class GroundTruthMap:
    """Analytic rasterization of the scenario in the episode frame."""

    cells: np.ndarray  # float32 (2, W, W), binary


def project_depth(
    img: DepthImage,
    intrinsics: CameraIntrinsics,
    agent: AgentConfig,
    thresholds: tuple[float, float] = DEFAULT_HEIGHT_THRESHOLDS,
    side: int = DEFAULT_EGO_SIDE,
    resolution: float = DEFAULT_RESOLUTION,
) -> EgoMap:
    """Back-project a restored depth image into an egocentric occupancy map.

    Surface points whose height falls inside ``thresholds`` mark their
    ground cell occupied; points below the lower threshold mark it free
    (explored only). Cells crossed by the ray's ground trace on the way to
    a used hit become explored. Points above the upper threshold are
    discarded.
    """
    h, w = img.shape
    if (h, w) != (intrinsics.height, intrinsics.width):
        raise ValueError(
            f"image {h}x{w} does not match intrinsics "
            f"{intrinsics.height}x{intrinsics.width}"
        )
    h_min, h_max = thresholds
    ego = EgoMap.blank(side, resolution)

    if not img.valid.any():
        return ego

    vv, uu = np.nonzero(img.valid)
    z = img.values[vv, uu].astype(np.float64)
    x_cam = ((uu + 0.5) - w / 2.0) / intrinsics.fx * z  # rightward, meters
    y_cam = ((vv + 0.5) - h / 2.0) / intrinsics.fy * z  # downward, meters
    height = agent.camera_height - y_cam
    forward = z
    right = x_cam

    used = height <= h_max
    if not used.any():
        return ego
    occupied = used & (height >= h_min)

    j = np.rint(forward / resolution).astype(np.int64)
    i = (side // 2) + np.rint(right / resolution).astype(np.int64)
    inside = used & (j >= 0) & (j < side) & (i >= 0) & (i < side)
    if not inside.any():
        return ego

    j, i, occ = j[inside], i[inside], occupied[inside]

    # carve explored along the ground trace of each ray (integer line walk
    # from the agent cell, deduplicated per endpoint cell)
    endpoints = np.unique(np.stack([j, i], axis=1), axis=0)
    ej, ei = endpoints[:, 0], endpoints[:, 1]
    a_j, a_i = 0, side // 2
    n_steps = np.maximum(np.abs(ej - a_j), np.abs(ei - a_i))
    max_steps = int(n_steps.max())
    if max_steps > 0:
        k = np.arange(max_steps + 1, dtype=np.float64)
        frac = np.minimum(k[None, :] / np.maximum(n_steps, 1)[:, None], 1.0)
        line_j = np.rint(a_j + frac * (ej - a_j)[:, None]).astype(np.int64).ravel()
        line_i = np.rint(a_i + frac * (ei - a_i)[:, None]).astype(np.int64).ravel()
        ego.cells[1, line_j, line_i] = 1.0
    else:
        ego.cells[1, ej, ei] = 1.0

    ego.cells[1, j, i] = 1.0
    ego.cells[0, j[occ], i[occ]] = 1.0
    return ego


def _trace_visited(visited: np.ndarray, start: tuple[int, int], end: tuple[int, int]) -> None:
    """Mark a 4-connected line of cells between two agent positions."""
    r0, c0 = start
    r1, c1 = end
    n = abs(r1 - r0) + abs(c1 - c0)
    if n == 0:
        visited[r0, c0] = True
        return
    # supercover walk: step one axis at a time toward the target
    r, c = r0, c0
    visited[r, c] = True
    for k in range(1, n + 1):
        t = k / n
        tr = r0 + t * (r1 - r0)
        tc = c0 + t * (c1 - c0)
        if abs(tr - r) >= abs(tc - c):
            r += 1 if r1 > r else (-1 if r1 < r else 0)
        else:
            c += 1 if c1 > c else (-1 if c1 < c else 0)
        if 0 <= r < visited.shape[0] and 0 <= c < visited.shape[1]:
            visited[r, c] = True


def register(ego: EgoMap, pose: Pose, global_map: GlobalMap) -> GlobalMap:
    """Fuse an egocentric map into the global map at the given pose.

    Fusion is per-cell maximum, so the global map is monotone
    non-decreasing. Writes that would land outside the global grid are
    clipped and counted in ``clip_warnings``. The visited channel gains the
    4-connected trace from the previous agent cell to the current one.
    """
    if ego.resolution != global_map.resolution:
        raise ValueError("ego and global resolution differ")
    res = global_map.resolution
    side = ego.side
    c, s = math.cos(pose.theta), math.sin(pose.theta)

    ch, jj, ii = np.nonzero(ego.cells > 0.0)
    prev_cell = global_map.agent_cell
    new_cell = global_map.cell_of(pose.x, pose.y)

    if len(ch) > 0:
        forward = jj.astype(np.float64) * res
        right = (ii.astype(np.float64) - side // 2) * res
        wx = pose.x + forward * c + right * s
        wy = pose.y + forward * s - right * c
        gc = np.rint((wx - global_map.origin[0]) / res).astype(np.int64)
        gr = np.rint((wy - global_map.origin[1]) / res).astype(np.int64)
        inside = (gr >= 0) & (gr < global_map.side) & (gc >= 0) & (gc < global_map.side)
        clipped = int((~inside).sum())
        if clipped:
            global_map.clip_warnings += clipped
        vals = ego.cells[ch, jj, ii]
        np.maximum.at(global_map.cells, (ch[inside], gr[inside], gc[inside]), vals[inside])

    if global_map.in_bounds(new_cell):
        _trace_visited(global_map.visited, prev_cell, new_cell)
        global_map.agent_cell = new_cell
    return global_map


def mark_occupied(global_map: GlobalMap, cell: tuple[int, int]) -> None:
    """Force one cell occupied+explored (bump recovery writes through here)."""
    if global_map.in_bounds(cell):
        global_map.cells[0, cell[0], cell[1]] = 1.0
        global_map.cells[1, cell[0], cell[1]] = 1.0


def accuracy(m: GlobalMap | np.ndarray, gt: GroundTruthMap | np.ndarray) -> int:
    """Count of per-cell, per-channel agreements after binarizing at 0.5."""
    mc = m.cells if not isinstance(m, np.ndarray) else m
    gc = gt.cells if not isinstance(gt, np.ndarray) else gt
    if mc.shape != gc.shape:
        raise ValueError(f"map shapes differ: {mc.shape} vs {gc.shape}")
    mb = mc > 0.5
    gb = gc > 0.5
    return int(np.count_nonzero(mb == gb))


def global_reward(m_t: GlobalMap, m_prev: GlobalMap | int, gt: GroundTruthMap) -> int:
    """Change in map accuracy between consecutive maps (may be negative).

    ``m_prev`` may be the previous map or its precomputed accuracy.
    """
    prev_acc = m_prev if isinstance(m_prev, int) else accuracy(m_prev, gt)
    return accuracy(m_t, gt) - prev_acc


def rasterize_ground_truth(
    scenario: Scenario,
    frame: EpisodeFrame,
    side: int = DEFAULT_GLOBAL_SIDE,
    resolution: float = DEFAULT_RESOLUTION,
    origin: tuple[float, float] | None = None,
    h_min: float = DEFAULT_HEIGHT_THRESHOLDS[0],
) -> GroundTruthMap:
    """Analytic episode-frame rasterization of the scenario.

    A cell is occupied when its center falls inside an obstacle footprint
    tall enough to cross the lower height threshold, or outside the arena.
    The explored channel is all ones: the ground truth holds the complete
    state of the world.
    """
    if origin is None:
        half = side // 2
        origin = (-half * resolution, -half * resolution)
    idx = np.arange(side, dtype=np.float64)
    ex = origin[0] + idx * resolution  # episode-frame x per col
    ey = origin[1] + idx * resolution  # episode-frame y per row
    exg, eyg = np.meshgrid(ex, ey)  # (row, col)

    # episode frame -> world frame
    A = frame.A
    wx = A[0, 0] * exg + A[0, 1] * eyg + A[0, 2]
    wy = A[1, 0] * exg + A[1, 1] * eyg + A[1, 2]

    b = scenario.bounds
    occ = (wx < b.min_x) | (wx > b.max_x) | (wy < b.min_y) | (wy > b.max_y)
    for box in scenario.obstacles:
        if box.height < h_min:
            continue
        occ |= (wx >= box.min_x) & (wx <= box.max_x) & (wy >= box.min_y) & (wy <= box.max_y)

    cells = np.zeros((2, side, side), dtype=np.float32)
    cells[0] = occ.astype(np.float32)
    cells[1] = 1.0
    return GroundTruthMap(cells)


def featurize(global_map: GlobalMap, pose: Pose, policy_side: int = DEFAULT_POLICY_SIDE) -> np.ndarray:
    """Stack a crop and a max-pool of the enriched global map.

    The enriched map has four channels: occupied, explored, visited, and a
    one-hot agent position. The output is (8, G, G): channels 0-3 are a
    G x G crop centered on the agent (zero-padded at the borders), channels
    4-7 a factor W/G max-pool of the full enriched map.
    """
    W = global_map.side
    G = policy_side
    if G > W or W % G != 0:
        raise ValueError(f"policy side {G} must divide global side {W}")

    ar, ac = global_map.cell_of(pose.x, pose.y)
    if not global_map.in_bounds((ar, ac)):
        raise ValueError("agent pose lies outside the global map")

    enriched = np.zeros((4, W, W), dtype=np.float32)
    enriched[0] = global_map.cells[0]
    enriched[1] = global_map.cells[1]
    enriched[2] = global_map.visited.astype(np.float32)
    enriched[3, ar, ac] = 1.0

    out = np.zeros((8, G, G), dtype=np.float32)
    r0, c0 = ar - G // 2, ac - G // 2
    src_r0, src_c0 = max(r0, 0), max(c0, 0)
    src_r1, src_c1 = min(r0 + G, W), min(c0 + G, W)
    dst_r0, dst_c0 = src_r0 - r0, src_c0 - c0
    out[0:4, dst_r0 : dst_r0 + (src_r1 - src_r0), dst_c0 : dst_c0 + (src_c1 - src_c0)] = enriched[
        :, src_r0:src_r1, src_c0:src_c1
    ]

    k = W // G
    out[4:8] = enriched.reshape(4, G, k, G, k).max(axis=(2, 4))
    return out


def map_to_png(global_map: GlobalMap, path: str, goal_cell: tuple[int, int] | None = None) -> None:
    """Three-color debug export: unknown gray, free white, occupied black."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.image

    occ = global_map.cells[0] > 0.5
    exp = global_map.cells[1] > 0.5
    rgb = np.full((global_map.side, global_map.side, 3), 0.62)
    rgb[exp] = 1.0
    rgb[occ] = 0.0
    rgb[global_map.visited] = (0.35, 0.55, 0.95)
    ar, ac = global_map.agent_cell
    if global_map.in_bounds((ar, ac)):
        rgb[ar, ac] = (0.9, 0.2, 0.2)
    if goal_cell is not None and global_map.in_bounds(goal_cell):
        rgb[goal_cell[0], goal_cell[1]] = (0.1, 0.7, 0.1)
    matplotlib.image.imsave(path, rgb[::-1], vmin=0.0, vmax=1.0)


def map_to_bytes(cells: np.ndarray, visited: np.ndarray | None = None) -> bytes:
    """Flat binary layout shared with depth images: float32 channels, byte mask."""
    blob = np.ascontiguousarray(cells, dtype=np.float32).tobytes()
    if visited is not None:
        blob += np.ascontiguousarray(visited, dtype=np.uint8).tobytes()
    return blob
