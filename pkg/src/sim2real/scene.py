"""Procedural pillar-warehouse scenes, a pinhole ray-cast renderer, and the
deterministic style transform that manufactures the pseudo-real image domain.

World frame: x/y on the ground plane, z up. Camera frame: x right, y down,
z forward; depth images store the camera-frame z of the nearest hit
(0 = no return within max depth). Solids are grounded axis-aligned boxes
and vertical cylinders, so every intersection is closed-form.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, SceneGenerationError, ValidationError

_HIT_EPS = 1e-9


@dataclass(frozen=True)
class ClassMap:
    names: tuple

    @property
    def n_classes(self) -> int:
        return len(self.names)

    def id_of(self, name: str) -> int:
        return self.names.index(name)


WAREHOUSE_CLASSES = ClassMap(("floor", "walls", "clutter", "pillars", "tarps", "outside"))
OUTSIDE_ID = WAREHOUSE_CLASSES.id_of("outside")

# Simulated renders use a deliberately garish palette; the style transform
# remaps it to muted warehouse tones to manufacture the domain gap.
SIM_PALETTE = np.array([
    [0.46, 0.47, 0.50],   # floor
    [0.20, 0.45, 0.85],   # walls
    [0.12, 0.78, 0.22],   # clutter
    [0.93, 0.56, 0.12],   # pillars
    [0.88, 0.16, 0.72],   # tarps
    [0.02, 0.02, 0.03],   # outside
])
REAL_PALETTE = np.array([
    [0.34, 0.30, 0.26],
    [0.60, 0.58, 0.52],
    [0.40, 0.34, 0.26],
    [0.50, 0.50, 0.48],
    [0.30, 0.34, 0.42],
    [0.04, 0.04, 0.05],
])

_LIGHT_DIR = np.array([0.30, 0.18, 0.94])
_LIGHT_DIR = _LIGHT_DIR / np.linalg.norm(_LIGHT_DIR)


@dataclass(frozen=True)
class CameraIntrinsics:
    width: int = 64
    height: int = 48
    fx: float = 55.4
    fy: float = 55.4
    cx: float = 31.5  # pixel-grid center (width - 1) / 2
    cy: float = 23.5
    max_depth: float = 10.0

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ConfigError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ConfigError("principal point must lie inside the image")

    @staticmethod
    def for_size(width: int, height: int, max_depth: float = 10.0) -> "CameraIntrinsics":
        """Scale the default 64x48 geometry (~60 deg horizontal FOV) to a new size."""
        fx = 55.4 * width / 64.0
        return CameraIntrinsics(width, height, fx, fx, (width - 1) / 2.0,
                                (height - 1) / 2.0, max_depth)


@dataclass(frozen=True)
class Pose:
    position: tuple
    yaw: float

    def rotation(self) -> np.ndarray:
        """Columns map camera (right, down, forward) into world axes."""
        c, s = np.cos(self.yaw), np.sin(self.yaw)
        right = np.array([s, -c, 0.0])
        down = np.array([0.0, 0.0, -1.0])
        forward = np.array([c, s, 0.0])
        return np.stack([right, down, forward], axis=1)


@dataclass
class Box:
    lo: np.ndarray
    hi: np.ndarray
    class_id: int
    albedo: float = 1.0

    def __post_init__(self):
        self.lo = np.asarray(self.lo, dtype=np.float64)
        self.hi = np.asarray(self.hi, dtype=np.float64)
        if np.any(self.hi <= self.lo):
            raise ConfigError(f"degenerate box: lo={self.lo} hi={self.hi}")

    def intersect(self, origin, dirs):
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = (self.lo[None, :] - origin[None, :]) / dirs
            t2 = (self.hi[None, :] - origin[None, :]) / dirs
        tnear = np.minimum(t1, t2)
        tfar = np.maximum(t1, t2)
        axis = np.nanargmax(tnear, axis=1)
        tmin = np.nanmax(tnear, axis=1)
        tmax = np.nanmin(tfar, axis=1)
        hit = (tmax >= tmin) & (tmin > _HIT_EPS)
        t = np.where(hit, tmin, np.inf)
        normals = np.zeros_like(dirs)
        rows = np.arange(dirs.shape[0])
        normals[rows, axis] = -np.sign(dirs[rows, axis])
        return t, normals

    def distance(self, points) -> np.ndarray:
        points = np.atleast_2d(points)
        d = np.maximum(np.maximum(self.lo - points, 0.0), points - self.hi)
        return np.linalg.norm(d, axis=1)

    def contains(self, points) -> np.ndarray:
        points = np.atleast_2d(points)
        return np.all((points >= self.lo) & (points <= self.hi), axis=1)


@dataclass
class Cylinder:
    """Vertical cylinder standing on the ground plane."""

    center: np.ndarray  # xy
    radius: float
    z_top: float
    class_id: int
    albedo: float = 1.0

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=np.float64)
        if self.radius <= 0 or self.z_top <= 0:
            raise ConfigError("degenerate cylinder")

    def intersect(self, origin, dirs):
        dx = origin[0] - self.center[0]
        dy = origin[1] - self.center[1]
        a = dirs[:, 0] ** 2 + dirs[:, 1] ** 2
        b = 2.0 * (dx * dirs[:, 0] + dy * dirs[:, 1])
        c = dx * dx + dy * dy - self.radius**2
        disc = b * b - 4.0 * a * c
        t = np.full(dirs.shape[0], np.inf)
        normals = np.zeros_like(dirs)
        ok = (disc >= 0.0) & (a > _HIT_EPS)
        sq = np.sqrt(np.where(ok, disc, 0.0))
        t_side = np.where(ok, (-b - sq) / (2.0 * np.where(ok, a, 1.0)), np.inf)
        finite_side = np.isfinite(t_side)
        t_eval = np.where(finite_side, t_side, 0.0)
        z_side = origin[2] + t_eval * dirs[:, 2]
        side_hit = finite_side & (t_side > _HIT_EPS) & (z_side >= 0.0) & (z_side <= self.z_top)
        t[side_hit] = t_side[side_hit]
        hx = origin[0] + t_eval * dirs[:, 0] - self.center[0]
        hy = origin[1] + t_eval * dirs[:, 1] - self.center[1]
        norm = np.sqrt(hx * hx + hy * hy)
        norm = np.where(norm > _HIT_EPS, norm, 1.0)
        nrm = np.stack([hx / norm, hy / norm, np.zeros_like(hx)], axis=1)
        normals[side_hit] = nrm[side_hit]
        # top cap, visible when looking down onto the cylinder
        with np.errstate(divide="ignore", invalid="ignore"):
            t_cap = (self.z_top - origin[2]) / dirs[:, 2]
        finite_cap = np.isfinite(t_cap)
        tc = np.where(finite_cap, t_cap, 0.0)
        cx = origin[0] + tc * dirs[:, 0] - self.center[0]
        cy = origin[1] + tc * dirs[:, 1] - self.center[1]
        cap_hit = (
            finite_cap
            & (t_cap > _HIT_EPS)
            & (cx * cx + cy * cy <= self.radius**2)
            & (t_cap < t)
        )
        t[cap_hit] = t_cap[cap_hit]
        normals[cap_hit] = (0.0, 0.0, 1.0)
        return t, normals

    def distance(self, points) -> np.ndarray:
        points = np.atleast_2d(points)
        radial = np.linalg.norm(points[:, :2] - self.center[None, :], axis=1) - self.radius
        radial = np.maximum(radial, 0.0)
        dz = np.maximum(points[:, 2] - self.z_top, 0.0)
        dz = np.maximum(dz, -points[:, 2])
        dz = np.maximum(dz, 0.0)
        return np.sqrt(radial**2 + dz**2)

    def contains(self, points) -> np.ndarray:
        points = np.atleast_2d(points)
        inside_r = np.linalg.norm(points[:, :2] - self.center[None, :], axis=1) <= self.radius
        return inside_r & (points[:, 2] >= 0.0) & (points[:, 2] <= self.z_top)


@dataclass
class Scene:
    length: float
    width: float
    height: float
    boxes: list
    cylinders: list
    start: np.ndarray
    goal: np.ndarray
    camera_height: float
    seed: int
    floor_class: int = WAREHOUSE_CLASSES.id_of("floor")
    floor_albedo: float = 1.0

    @property
    def solids(self) -> list:
        return list(self.boxes) + list(self.cylinders)

    def distance_to_solids(self, points) -> np.ndarray:
        """3-D distance from each point to the nearest box/cylinder (floor excluded)."""
        points = np.atleast_2d(points)
        best = np.full(points.shape[0], np.inf)
        for solid in self.solids:
            best = np.minimum(best, solid.distance(points))
        return best

    def contains_point(self, points) -> np.ndarray:
        points = np.atleast_2d(points)
        inside = np.zeros(points.shape[0], dtype=bool)
        for solid in self.solids:
            inside |= solid.contains(points)
        return inside


@dataclass(frozen=True)
class SceneSpec:
    length: float = 76.0
    width: float = 14.0
    height: float = 4.0
    pillar_spacing: float = 6.0
    pillar_radius: float = 0.35
    pillar_jitter: float = 0.8
    pillar_keep: float = 0.9
    n_clutter: int = 36
    n_tarps: int = 6
    camera_height: float = 1.2
    clearance: float = 0.45
    start_margin: float = 2.5
    endpoint_clear_radius: float = 1.8
    max_retries: int = 25

    def __post_init__(self):
        if min(self.length, self.width, self.height) <= 0:
            raise ConfigError("scene extents must be positive")
        if self.pillar_spacing <= 2.0 * self.pillar_radius:
            raise ConfigError("pillar spacing must exceed pillar diameter")


def generate_scene(spec: SceneSpec, seed: int) -> Scene:
    """Build a reproducible warehouse scene with a traversable start-goal corridor."""
    for attempt in range(spec.max_retries):
        scene = _build_candidate(spec, seed, attempt)
        if flood_fill_feasible(scene, spec.clearance):
            return scene
    raise SceneGenerationError(
        f"no traversable scene after {spec.max_retries} attempts (seed {seed})"
    )


def _build_candidate(spec: SceneSpec, seed: int, attempt: int) -> Scene:
    rng = np.random.default_rng(np.random.PCG64(np.random.SeedSequence([seed, attempt])))
    L, W, H = spec.length, spec.width, spec.height
    start = np.array([spec.start_margin, W / 2.0, spec.camera_height])
    goal = np.array([L - spec.start_margin, W / 2.0, spec.camera_height])
    wall_t = 0.2
    wall_id = WAREHOUSE_CLASSES.id_of("walls")
    boxes = [
        Box([-wall_t, -wall_t, 0], [L + wall_t, 0, H], wall_id, _albedo(rng)),
        Box([-wall_t, W, 0], [L + wall_t, W + wall_t, H], wall_id, _albedo(rng)),
        Box([-wall_t, 0, 0], [0, W, H], wall_id, _albedo(rng)),
        Box([L, 0, 0], [L + wall_t, W, H], wall_id, _albedo(rng)),
    ]
    cylinders = []
    pillar_id = WAREHOUSE_CLASSES.id_of("pillars")
    xs = np.arange(spec.pillar_spacing, L - 0.5 * spec.pillar_spacing, spec.pillar_spacing)
    ys = np.arange(spec.pillar_spacing / 2.0, W, spec.pillar_spacing)
    for x in xs:
        for y in ys:
            if rng.uniform() > spec.pillar_keep:
                continue
            cx = x + rng.uniform(-spec.pillar_jitter, spec.pillar_jitter)
            cy = np.clip(y + rng.uniform(-spec.pillar_jitter, spec.pillar_jitter), 0.8, W - 0.8)
            r = spec.pillar_radius * rng.uniform(0.8, 1.2)
            if _near_endpoint((cx, cy), start, goal, spec.endpoint_clear_radius + r):
                continue
            cylinders.append(Cylinder([cx, cy], r, H, pillar_id, _albedo(rng)))
    tarp_id = WAREHOUSE_CLASSES.id_of("tarps")
    for _ in range(spec.n_tarps):
        length = rng.uniform(2.0, 4.0)
        cx, cy = rng.uniform(4, L - 4), rng.uniform(1.5, W - 1.5)
        if _near_endpoint((cx, cy), start, goal, spec.endpoint_clear_radius + length / 2):
            continue
        h = rng.uniform(2.2, min(3.0, H))
        if rng.uniform() < 0.5:
            lo = [cx - length / 2, cy - 0.04, 0]
            hi = [cx + length / 2, cy + 0.04, h]
        else:
            lo = [cx - 0.04, cy - length / 2, 0]
            hi = [cx + 0.04, cy + length / 2, h]
        boxes.append(Box(lo, hi, tarp_id, _albedo(rng)))
    clutter_id = WAREHOUSE_CLASSES.id_of("clutter")
    for _ in range(spec.n_clutter):
        sx, sy = rng.uniform(0.25, 1.0, 2)
        h = rng.uniform(0.3, 1.3)
        cx, cy = rng.uniform(1.5, L - 1.5), rng.uniform(0.8, W - 0.8)
        if _near_endpoint((cx, cy), start, goal, spec.endpoint_clear_radius + max(sx, sy)):
            continue
        boxes.append(Box([cx - sx / 2, cy - sy / 2, 0], [cx + sx / 2, cy + sy / 2, h],
                         clutter_id, _albedo(rng)))
    return Scene(L, W, H, boxes, cylinders, start, goal, spec.camera_height, seed,
                 floor_albedo=_albedo(rng))


def _albedo(rng) -> float:
    return float(rng.uniform(0.85, 1.12))


def _near_endpoint(xy, start, goal, radius) -> bool:
    xy = np.asarray(xy)
    return bool(
        np.linalg.norm(xy - start[:2]) < radius or np.linalg.norm(xy - goal[:2]) < radius
    )


def flood_fill_feasible(scene: Scene, clearance: float, cell: float = 0.5) -> bool:
    """Coarse-grid BFS from start to goal through cells with >= clearance room."""
    nx = int(np.ceil(scene.length / cell))
    ny = int(np.ceil(scene.width / cell))
    gx, gy = np.meshgrid(
        (np.arange(nx) + 0.5) * cell, (np.arange(ny) + 0.5) * cell, indexing="ij"
    )
    centers = np.stack(
        [gx.ravel(), gy.ravel(), np.full(nx * ny, scene.camera_height)], axis=1
    )
    free = (scene.distance_to_solids(centers) >= clearance).reshape(nx, ny)

    def cell_of(p):
        return (
            int(np.clip(p[0] / cell, 0, nx - 1)),
            int(np.clip(p[1] / cell, 0, ny - 1)),
        )

    start_c, goal_c = cell_of(scene.start), cell_of(scene.goal)
    if not (free[start_c] and free[goal_c]):
        return False
    frontier = [start_c]
    seen = np.zeros((nx, ny), dtype=bool)
    seen[start_c] = True
    while frontier:
        x, y = frontier.pop()
        if (x, y) == goal_c:
            return True
        for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            nx2, ny2 = x + dx, y + dy
            if 0 <= nx2 < nx and 0 <= ny2 < ny and free[nx2, ny2] and not seen[nx2, ny2]:
                seen[nx2, ny2] = True
                frontier.append((nx2, ny2))
    return False


@dataclass
class RenderOutput:
    rgb: np.ndarray    # HxWx3 in [0,1]
    depth: np.ndarray  # HxW camera-frame z in meters, 0 = no return
    seg: np.ndarray    # HxW class IDs
    pose: Pose


def render(scene: Scene, pose: Pose, intr: CameraIntrinsics) -> RenderOutput:
    """Nearest-hit ray cast through every pixel; depth is camera-frame z."""
    origin = np.asarray(pose.position, dtype=np.float64)
    if not (0 <= origin[0] <= scene.length and 0 <= origin[1] <= scene.width):
        raise ValidationError(f"camera position {origin[:2]} outside world bounds")
    if bool(scene.contains_point(origin[None, :])[0]):
        raise ValidationError("camera pose is inside a solid")

    h, w = intr.height, intr.width
    u, v = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    dirs_cam = np.stack(
        [(u.ravel() - intr.cx) / intr.fx, (v.ravel() - intr.cy) / intr.fy,
         np.ones(h * w)], axis=1
    )
    dirs_w = dirs_cam @ pose.rotation().T
    n_px = h * w

    best_t = np.full(n_px, np.inf)
    best_nrm = np.zeros((n_px, 3))
    best_color = np.tile(SIM_PALETTE[OUTSIDE_ID], (n_px, 1))
    best_class = np.full(n_px, OUTSIDE_ID, dtype=np.uint8)

    # ground plane
    with np.errstate(divide="ignore", invalid="ignore"):
        t_ground = -origin[2] / dirs_w[:, 2]
    gmask = np.isfinite(t_ground) & (t_ground > _HIT_EPS)
    _take(best_t, best_nrm, best_color, best_class, gmask, t_ground,
          np.array([0.0, 0.0, 1.0]), SIM_PALETTE[scene.floor_class] * scene.floor_albedo,
          scene.floor_class)
    for solid in scene.solids:
        t, nrm = solid.intersect(origin, dirs_w)
        mask = t < best_t
        if mask.any():
            best_t[mask] = t[mask]
            best_nrm[mask] = nrm[mask]
            best_color[mask] = np.clip(SIM_PALETTE[solid.class_id] * solid.albedo, 0, 1)
            best_class[mask] = solid.class_id

    hit = np.isfinite(best_t) & (best_t <= intr.max_depth)
    depth = np.where(hit, best_t, 0.0).reshape(h, w)
    seg = np.where(hit, best_class, OUTSIDE_ID).astype(np.uint8).reshape(h, w)
    facing = np.where(np.einsum("ij,ij->i", best_nrm, dirs_w) > 0, -1.0, 1.0)
    lambert = 0.72 + 0.28 * np.clip((best_nrm * facing[:, None]) @ _LIGHT_DIR, 0.0, None)
    rgb = best_color * lambert[:, None]
    rgb[~hit] = SIM_PALETTE[OUTSIDE_ID]
    rgb = np.clip(rgb, 0.0, 1.0).reshape(h, w, 3)
    return RenderOutput(rgb, depth, seg, pose)


def _take(best_t, best_nrm, best_color, best_class, mask, t, nrm, color, class_id):
    better = mask & (t < best_t)
    best_t[better] = t[better]
    best_nrm[better] = nrm
    best_color[better] = np.clip(color, 0, 1)
    best_class[better] = class_id


@dataclass(frozen=True)
class StyleTransform:
    """Deterministic sim-to-pseudo-real recoloring.

    Applies a per-class channel ratio (real palette over sim palette), a
    vertical lighting gradient, and clamped additive noise. The identity
    table with zero gradient and zero noise reproduces the input exactly.
    """

    sim_palette: np.ndarray = field(default_factory=lambda: SIM_PALETTE.copy())
    real_palette: np.ndarray = field(default_factory=lambda: REAL_PALETTE.copy())
    gradient_strength: float = 0.08
    noise_sigma: float = 0.01
    seed: int = 0


def apply_style(rgb: np.ndarray, transform: StyleTransform, seg: np.ndarray) -> np.ndarray:
    rgb = np.asarray(rgb, dtype=np.float64)
    seg = np.asarray(seg)
    if rgb.shape[:2] != seg.shape:
        raise ValidationError(f"rgb {rgb.shape[:2]} and seg {seg.shape} extents differ")
    n_classes = transform.sim_palette.shape[0]
    if seg.max() >= n_classes:
        raise ValidationError(f"seg contains class {int(seg.max())} outside the remap table")
    ratio = transform.real_palette / transform.sim_palette
    out = rgb * ratio[seg]
    hgt = rgb.shape[0]
    rows = np.arange(hgt, dtype=np.float64) / max(hgt - 1, 1)
    row_gain = 1.0 + transform.gradient_strength * (0.5 - rows)
    out *= row_gain[:, None, None]
    if transform.noise_sigma > 0:
        rng = np.random.default_rng(transform.seed)
        out += rng.normal(0.0, transform.noise_sigma, out.shape)
    return np.clip(out, 0.0, 1.0)


def sample_poses(scene: Scene, n: int, seed: int, clearance: float = 0.45,
                 max_attempts_per_pose: int = 400) -> list[Pose]:
    """Collision-free camera poses, uniform over free space, yaw uniform."""
    if n <= 0:
        raise ConfigError("n must be positive")
    rng = np.random.default_rng(seed)
    poses = []
    margin = clearance
    budget = n * max_attempts_per_pose
    while len(poses) < n and budget > 0:
        budget -= 1
        x = rng.uniform(margin, scene.length - margin)
        y = rng.uniform(margin, scene.width - margin)
        yaw = rng.uniform(0.0, 2.0 * np.pi)
        p = np.array([x, y, scene.camera_height])
        if scene.distance_to_solids(p[None, :])[0] >= clearance:
            poses.append(Pose((x, y, scene.camera_height), yaw))
    if len(poses) < n:
        raise SceneGenerationError(f"pose sampling budget exhausted at {len(poses)}/{n}")
    return poses
