"""Ground-truth collision labeling from depth images.

A primitive is unsafe (label 1) when any dense-time sample of its
trajectory (a) passes within the safety margin of a back-projected depth
point, (b) leaves the camera frustum or moves behind the image plane,
(c) reaches or passes the observed surface along its pixel ray, or
(d) enters zero-return space beyond the configured trust range. The
t = 0 sample is the vehicle's current position and is exempt.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import ConfigError, ShapeError
from .primitives import PrimitiveGrid, Trajectory, VehicleState, lag_profile
from .scene import CameraIntrinsics

ORIGIN_EPS = 1e-9  # samples this close to the camera are the vehicle itself


@dataclass(frozen=True)
class SafetyConfig:
    """Margins and sampling for the labeling rules; all surfaced, no constants."""

    r_safe: float = 0.5
    sigma_pos: float = 0.1
    check_dt: float = 0.005
    free_space_trust: float | None = None  # None: trust to max_depth + 0.5 m
    frustum_exit_unsafe: bool = True

    def __post_init__(self):
        if self.r_safe <= 0:
            raise ConfigError("r_safe must be positive")
        if self.sigma_pos < 0:
            raise ConfigError("sigma_pos must be nonnegative")
        if self.check_dt <= 0:
            raise ConfigError("check_dt must be positive")

    @property
    def margin(self) -> float:
        return self.r_safe + self.sigma_pos

    def trust_range(self, intr: CameraIntrinsics) -> float:
        if self.free_space_trust is not None:
            return self.free_space_trust
        return intr.max_depth + 0.5

    def check_times(self, horizon: float) -> np.ndarray:
        n = int(round(horizon / self.check_dt))
        if abs(n * self.check_dt - horizon) > 1e-9:
            raise ConfigError(f"check_dt={self.check_dt} does not divide horizon={horizon}")
        return np.linspace(0.0, horizon, n + 1)


def depth_to_points(depth: np.ndarray, intr: CameraIntrinsics) -> np.ndarray:
    """Back-project valid depth pixels to camera-frame points (M, 3)."""
    depth = np.asarray(depth, dtype=np.float64)
    if depth.shape != (intr.height, intr.width):
        raise ShapeError(
            f"depth {depth.shape} does not match intrinsics {(intr.height, intr.width)}"
        )
    v, u = np.nonzero(depth > 0.0)
    z = depth[v, u]
    x = (u - intr.cx) * z / intr.fx
    y = (v - intr.cy) * z / intr.fy
    return np.stack([x, y, z], axis=1)


def _rule_hits(pts: np.ndarray, depth: np.ndarray, intr: CameraIntrinsics,
               safety: SafetyConfig) -> np.ndarray:
    """Frustum/occlusion/unknown-space checks (rules b-d) for sample points."""
    z = pts[:, 2]
    near_origin = np.linalg.norm(pts, axis=1) < ORIGIN_EPS
    unsafe = np.zeros(pts.shape[0], dtype=bool)
    if safety.frustum_exit_unsafe:
        unsafe |= (z <= 0.0) & ~near_origin
    front = (z > 0.0) & ~near_origin
    if front.any():
        zf = z[front]
        u = intr.fx * pts[front, 0] / zf + intr.cx
        v = intr.fy * pts[front, 1] / zf + intr.cy
        pu = np.rint(u).astype(np.int64)
        pv = np.rint(v).astype(np.int64)
        inside = (pu >= 0) & (pu <= intr.width - 1) & (pv >= 0) & (pv <= intr.height - 1)
        front_unsafe = np.zeros(zf.size, dtype=bool)
        if safety.frustum_exit_unsafe:
            front_unsafe |= ~inside
        din = np.zeros(zf.size)
        din[inside] = depth[pv[inside], pu[inside]]
        margin = safety.margin
        trust = safety.trust_range(intr)
        front_unsafe |= inside & (din > 0.0) & (zf >= din - margin)
        front_unsafe |= inside & (din == 0.0) & (zf > trust)
        unsafe[front] = front_unsafe
    return unsafe


def label_primitive(traj: Trajectory, cloud: np.ndarray, depth: np.ndarray,
                    intr: CameraIntrinsics, safety: SafetyConfig) -> int:
    """Binary label for one trajectory; 1 means collision/near-miss/unobserved."""
    times = safety.check_times(traj.times[-1])
    pts = traj.positions_at(times)[1:]  # t=0 exempt
    if cloud.shape[0] > 0:
        dist, _ = cKDTree(cloud).query(pts, distance_upper_bound=safety.margin)
        if (dist < safety.margin).any():
            return 1
    return int(_rule_hits(pts, depth, intr, safety).any())


def label_grid(state: VehicleState, depth: np.ndarray, intr: CameraIntrinsics,
               grid: PrimitiveGrid, safety: SafetyConfig) -> np.ndarray:
    """Labels for every primitive in flat-index order (dense-time checks)."""
    depth = np.asarray(depth, dtype=np.float64)
    times = safety.check_times(grid.horizon)
    n_t = times.size - 1
    k = grid.n_primitives
    a0 = state.a0.copy()
    a0[1] = 0.0
    pts = np.empty((k, n_t, 3))
    for idx in range(k):
        pos, _, _ = lag_profile(state.v0, a0, grid.targets[idx], grid.tau, times)
        pts[idx] = pos[1:]
    flat = pts.reshape(k * n_t, 3)
    labels = np.zeros(k, dtype=np.uint8)
    cloud = depth_to_points(depth, intr)
    if cloud.shape[0] > 0:
        dist, _ = cKDTree(cloud).query(flat, distance_upper_bound=safety.margin)
        labels |= (dist < safety.margin).reshape(k, n_t).any(axis=1)
    labels |= _rule_hits(flat, depth, intr, safety).reshape(k, n_t).any(axis=1)
    return labels


@dataclass(frozen=True)
class VelocityDistribution:
    """Uniform redraw ranges for augmentation; lo == hi is a degenerate draw."""

    forward: tuple = (0.0, 3.5)
    lateral: tuple = (-1.0, 1.0)

    def draw(self, rng) -> np.ndarray:
        lat = rng.uniform(self.lateral[0], self.lateral[1])
        fwd = rng.uniform(self.forward[0], self.forward[1])
        return np.array([lat, 0.0, fwd])


def augment_velocity(state: VehicleState, depth: np.ndarray, intr: CameraIntrinsics,
                     grid: PrimitiveGrid, safety: SafetyConfig, n_variants: int,
                     dist: VelocityDistribution, seed: int):
    """Redraw the instantaneous velocity n times and relabel; returns
    [(VehicleState, labels)] in draw order. Depth is shared, not copied."""
    if n_variants < 1:
        raise ConfigError("n_variants must be >= 1")
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n_variants):
        v0 = dist.draw(rng)
        variant = VehicleState(v0, state.a0.copy())
        out.append((variant, label_grid(variant, depth, intr, grid, safety)))
    return out
