"""Simulated depth camera: pinhole raycasting, sensor noise, and restoration.

Depth values follow the z-depth convention: each pixel stores the distance
along the optical axis to the first surface hit, not the Euclidean ray
length. Rendered surfaces are the extruded obstacle boxes and the arena
walls (which extend upward without limit); there is no floor return, so an
empty arena with far walls yields an all-invalid image.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

from .world import Box, DepthNoiseConfig, Pose, Scenario

INVALID_DEPTH = 0.0  # sentinel stored at invalid pixels; never read as depth
_T_EPS = 1e-9


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole parameters. Defaults match the robot-facing depth camera."""

    width: int = 128
    height: int = 96
    hfov: float = math.radians(57.0)
    vfov: float = math.radians(86.0)
    depth_min: float = 0.0
    depth_max: float = 5.0
    camera_height: float = 0.6

    def validate(self) -> None:
        if not (0 < self.hfov < math.pi and 0 < self.vfov < math.pi):
            raise ValueError("fields of view must lie in (0, pi)")
        if not self.depth_max > self.depth_min >= 0:
            raise ValueError("require depth_max > depth_min >= 0")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image dimensions must be positive")

    @property
    def fx(self) -> float:
        return (self.width / 2.0) / math.tan(self.hfov / 2.0)

    @property
    def fy(self) -> float:
        return (self.height / 2.0) / math.tan(self.vfov / 2.0)


@dataclass
class DepthImage:
    """H x W grid of z-depths in meters plus a per-pixel validity mask."""

    values: np.ndarray  # float32, shape (H, W)
    valid: np.ndarray  # bool, shape (H, W)

    def __post_init__(self):
        if self.values.shape != self.valid.shape:
            raise ValueError("values and valid mask must share a shape")
        self.values = np.ascontiguousarray(self.values, dtype=np.float32)
        self.valid = np.ascontiguousarray(self.valid, dtype=bool)
        self.values[~self.valid] = INVALID_DEPTH

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def copy(self) -> "DepthImage":
        return DepthImage(self.values.copy(), self.valid.copy())

    # flat binary layout: row-major float32 values, then one byte per pixel
    # (1 = valid). Dimensions travel out of band.
    def to_bytes(self) -> bytes:
        return self.values.tobytes() + self.valid.astype(np.uint8).tobytes()

    @staticmethod
    def from_bytes(data: bytes, height: int, width: int) -> "DepthImage":
        n = height * width
        expected = n * 4 + n
        if len(data) != expected:
            raise ValueError(f"expected {expected} bytes, got {len(data)}")
        values = np.frombuffer(data[: n * 4], dtype=np.float32).reshape(height, width)
        valid = np.frombuffer(data[n * 4 :], dtype=np.uint8).reshape(height, width) != 0
        return DepthImage(values.copy(), valid)

    def to_pgm(self, depth_max: float) -> bytes:
        """8-bit PGM for eyeballing; invalid pixels render black."""
        h, w = self.shape
        scaled = np.zeros((h, w), dtype=np.uint8)
        if depth_max > 0:
            lvl = np.clip(self.values / depth_max, 0.0, 1.0) * 254.0 + 1.0
            scaled[self.valid] = lvl[self.valid].astype(np.uint8)
        buf = io.BytesIO()
        buf.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        buf.write(scaled.tobytes())
        return buf.getvalue()


def _pixel_rays(pose: Pose, intr: CameraIntrinsics):
    """Per-pixel world-frame ray directions, scaled so t equals z-depth.

    Camera frame: +z along the heading, +x to the agent's right, +y down.
    """
    u = (np.arange(intr.width, dtype=np.float64) + 0.5) - intr.width / 2.0
    v = (np.arange(intr.height, dtype=np.float64) + 0.5) - intr.height / 2.0
    x_cam = u[None, :] / intr.fx  # (1, W)
    y_cam = v[:, None] / intr.fy  # (H, 1)
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    # right vector is (sin, -cos); image-down is world -z
    dx = c + s * x_cam  # broadcast to (H, W)
    dy = s - c * x_cam
    dx = np.broadcast_to(dx, (intr.height, intr.width)).copy()
    dy = np.broadcast_to(dy, (intr.height, intr.width)).copy()
    dz = np.broadcast_to(-y_cam, (intr.height, intr.width)).copy()
    return dx, dy, dz


def _slab_interval(o: float, d: np.ndarray, lo: float, hi: float):
    """Entry/exit parameters of rays against one slab lo <= o + t*d <= hi."""
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (lo - o) / d
        t2 = (hi - o) / d
    near = np.minimum(t1, t2)
    far = np.maximum(t1, t2)
    inside = (lo <= o) & (o <= hi)
    degenerate = d == 0.0
    near = np.where(degenerate, np.where(inside, -np.inf, np.inf), near)
    far = np.where(degenerate, np.where(inside, np.inf, -np.inf), far)
    return near, far


def _box_hits(ox, oy, oz, dx, dy, dz, box: Box) -> np.ndarray:
    """First-hit parameter per ray against one extruded box; inf if missed."""
    nx, fx_ = _slab_interval(ox, dx, box.min_x, box.max_x)
    ny, fy_ = _slab_interval(oy, dy, box.min_y, box.max_y)
    nz, fz_ = _slab_interval(oz, dz, 0.0, box.height)
    t_near = np.maximum(np.maximum(nx, ny), nz)
    t_far = np.minimum(np.minimum(fx_, fy_), fz_)
    hit = (t_near <= t_far) & (t_near > _T_EPS)
    return np.where(hit, t_near, np.inf)


def render_depth(pose: Pose, intrinsics: CameraIntrinsics, scenario: Scenario) -> DepthImage:
    """Raycast the scene from the camera mounted at the agent pose.

    Pixels whose ray hits nothing closer than depth_max (or closer than
    depth_min) are invalid.
    """
    intrinsics.validate()
    dx, dy, dz = _pixel_rays(pose, intrinsics)
    ox, oy, oz = pose.x, pose.y, intrinsics.camera_height

    t_best = np.full(dz.shape, np.inf)
    for box in scenario.obstacles:
        t_best = np.minimum(t_best, _box_hits(ox, oy, oz, dx, dy, dz, box))

    # arena walls: exit point of the 2D bounds slab, valid only above the floor
    b = scenario.bounds
    _, far_x = _slab_interval(ox, dx, b.min_x, b.max_x)
    _, far_y = _slab_interval(oy, dy, b.min_y, b.max_y)
    t_wall = np.minimum(far_x, far_y)
    wall_ok = (t_wall > _T_EPS) & np.isfinite(t_wall) & (oz + t_wall * dz >= 0.0)
    t_best = np.minimum(t_best, np.where(wall_ok, t_wall, np.inf))

    valid = np.isfinite(t_best) & (t_best <= intrinsics.depth_max) & (t_best >= intrinsics.depth_min)
    values = np.where(valid, t_best, INVALID_DEPTH).astype(np.float32)
    return DepthImage(values, valid)


def _edge_mask(img: DepthImage, threshold: float) -> np.ndarray:
    """Pixels whose depth jumps by more than threshold to a valid 4-neighbor."""
    vals, valid = img.values.astype(np.float64), img.valid
    edge = np.zeros(vals.shape, dtype=bool)
    for axis, shift in ((0, 1), (0, -1), (1, 1), (1, -1)):
        shifted = np.roll(vals, shift, axis=axis)
        shifted_ok = np.roll(valid, shift, axis=axis)
        # roll wraps around; kill the wrapped row/column
        wrap = np.zeros(vals.shape, dtype=bool)
        if axis == 0:
            idx = 0 if shift == 1 else -1
            wrap[idx, :] = True
        else:
            idx = 0 if shift == 1 else -1
            wrap[:, idx] = True
        jump = valid & shifted_ok & ~wrap & (np.abs(vals - shifted) > threshold)
        edge |= jump
    return edge


def apply_depth_noise(
    img: DepthImage,
    cfg: DepthNoiseConfig,
    rng: np.random.Generator,
    depth_min: float = 0.0,
    depth_max: float = float("inf"),
) -> DepthImage:
    """Perturb valid pixels with sigma(z) = sigma0 + sigma2*z^2 and drop holes.

    Dropout probability is dropout_base, or dropout_edge at depth
    discontinuities of the input image. Surviving values are clamped to
    [depth_min, depth_max]. An all-zero config returns the image unchanged.
    """
    cfg.validate()
    if cfg.is_zero():
        return img.copy()

    vals = img.values.astype(np.float64)
    valid = img.valid.copy()
    sigma = cfg.sigma0 + cfg.sigma2 * vals**2
    noise = rng.normal(0.0, 1.0, size=vals.shape) * sigma
    edge = _edge_mask(img, DepthNoiseConfig.EDGE_STEP)
    drop_p = np.where(edge, cfg.dropout_edge, cfg.dropout_base)
    drop = rng.random(size=vals.shape) < drop_p

    out = np.where(valid, np.clip(vals + noise, depth_min, depth_max), INVALID_DEPTH)
    keep = valid & ~drop
    return DepthImage(out.astype(np.float32), keep)


def _neighbor_stats(vals: np.ndarray, valid: np.ndarray):
    """Sum and count of valid 8-neighbors for every pixel."""
    h, w = vals.shape
    pv = np.zeros((h + 2, w + 2))
    pm = np.zeros((h + 2, w + 2), dtype=bool)
    pv[1:-1, 1:-1] = np.where(valid, vals, 0.0)
    pm[1:-1, 1:-1] = valid
    total = np.zeros((h, w))
    count = np.zeros((h, w), dtype=np.int32)
    for di in (0, 1, 2):
        for dj in (0, 1, 2):
            if di == 1 and dj == 1:
                continue
            total += pv[di : di + h, dj : dj + w]
            count += pm[di : di + h, dj : dj + w]
    return total, count


def _masked_median3(vals: np.ndarray, valid: np.ndarray) -> np.ndarray:
    """3x3 median over valid pixels only; even counts take the upper median.

    Every output is therefore an order statistic of the pixel's valid
    neighborhood (itself included).
    """
    h, w = vals.shape
    pv = np.full((h + 2, w + 2), np.inf)
    pv[1:-1, 1:-1] = np.where(valid, vals, np.inf)
    stack = np.stack(
        [pv[di : di + h, dj : dj + w] for di in (0, 1, 2) for dj in (0, 1, 2)], axis=-1
    )
    stack = np.sort(stack, axis=-1)
    counts = np.sum(np.isfinite(stack), axis=-1)
    pick = np.minimum(counts // 2, 8)
    out = np.take_along_axis(stack, pick[..., None], axis=-1)[..., 0]
    return np.where(counts > 0, out, 0.0)


def restore_depth(img: DepthImage) -> DepthImage:
    """Fill holes boundary-inward, then smooth with a 3x3 masked median.

    Invalid pixels adjacent to valid ones are filled, wave by wave, with the
    mean of their valid 8-neighbors from the previous wave. Regions with no
    valid pixel anywhere stay invalid. Filled pixels are marked valid in the
    output mask.
    """
    vals = img.values.astype(np.float64).copy()
    valid = img.valid.copy()

    while True:
        if valid.all():
            break
        total, count = _neighbor_stats(vals, valid)
        frontier = ~valid & (count > 0)
        if not frontier.any():
            break
        vals[frontier] = total[frontier] / count[frontier]
        valid |= frontier

    if not valid.any():
        return img.copy()

    smoothed = _masked_median3(vals, valid)
    out = np.where(valid, smoothed, INVALID_DEPTH).astype(np.float32)
    return DepthImage(out, valid)


def downsample(img: DepthImage, factor: int) -> DepthImage:
    """Stride subsampling used by the observation stream."""
    if factor <= 1:
        return img.copy()
    return DepthImage(img.values[::factor, ::factor].copy(), img.valid[::factor, ::factor].copy())
