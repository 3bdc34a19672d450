"""Closed-loop navigation: render, predict or oracle-label, pick an action,
advance along the chosen primitive for one replan interval, repeat.

The vehicle flies at fixed height in the world frame; the camera yaws
toward the velocity (or the goal when slow), so primitive dynamics run in
the camera frame and get rotated out. Terminates on goal arrival, physical
collision (closer than r_safe to any solid), a run of consecutive STOPs,
or the step budget.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, ValidationError
from .labeler import SafetyConfig, label_grid
from .primitives import SPEED_CAP, PrimitiveGrid, VehicleState, lag_profile
from .scene import CameraIntrinsics, Pose, Scene, render
from .tasknets import STOP, AvoidanceNet, predict_collision, select_action


@dataclass(frozen=True)
class RolloutConfig:
    replan_interval: float = 0.5
    goal_radius: float = 2.0
    max_steps: int = 400
    stop_limit: int = 12         # consecutive STOPs before declaring deadlock
    threshold: float = 0.05
    speed_cap: float = SPEED_CAP
    min_yaw_speed: float = 0.5   # below this, face the goal instead of velocity
    scan_step: float = np.pi / 6  # in-place yaw scan applied on consecutive STOPs

    def __post_init__(self):
        if self.replan_interval <= 0 or self.max_steps < 1:
            raise ConfigError("replan interval and step budget must be positive")


@dataclass
class RolloutResult:
    status: str                  # goal | collision | stop_deadlock | budget
    steps: list = field(default_factory=list)
    distance_travelled: float = 0.0

    @property
    def reached_goal(self) -> bool:
        return self.status == "goal"

    @property
    def collided(self) -> bool:
        return self.status == "collision"


def oracle_policy(intr: CameraIntrinsics, grid: PrimitiveGrid, safety: SafetyConfig,
                  speed_scaled_sigma: bool = True, speed_cap: float = SPEED_CAP):
    """Ground-truth labeling as a policy: probability 0 or 1 per primitive.

    With speed_scaled_sigma the position-uncertainty inflation grows with
    speed (state estimates degrade in motion), so a stopped vehicle is not
    frozen by the full high-speed margin.
    """

    def policy(render_out, state: VehicleState) -> np.ndarray:
        cfg = safety
        if speed_scaled_sigma:
            frac = min(float(np.linalg.norm(state.v0)) / speed_cap, 1.0)
            cfg = replace(safety, sigma_pos=safety.sigma_pos * frac)
        return label_grid(state, render_out.depth, intr, grid, cfg).astype(np.float64)

    return policy


def net_policy(net: AvoidanceNet):
    def policy(render_out, state: VehicleState) -> np.ndarray:
        return predict_collision(net, render_out.rgb, state)

    return policy


def _yaw_matrix(yaw: float) -> np.ndarray:
    return Pose((0.0, 0.0, 0.0), yaw).rotation()


def _brake_target(v_cam: np.ndarray, max_accel: float) -> np.ndarray:
    """Maximal planar deceleration toward rest."""
    planar = np.array([v_cam[0], 0.0, v_cam[2]])
    speed = np.linalg.norm(planar)
    if speed < 1e-6:
        return np.zeros(3)
    return -max_accel * planar / speed


def rollout(scene: Scene, policy, grid: PrimitiveGrid, safety: SafetyConfig,
            intr: CameraIntrinsics, cfg: RolloutConfig,
            start=None, goal=None) -> RolloutResult:
    start = np.asarray(start if start is not None else scene.start, dtype=np.float64)
    goal = np.asarray(goal if goal is not None else scene.goal, dtype=np.float64)
    for name, p in (("start", start), ("goal", goal)):
        if scene.distance_to_solids(p[None, :])[0] < safety.r_safe:
            raise ValidationError(f"{name} position is not in free space")

    pos = start.copy()
    vel = np.zeros(3)
    acc = np.zeros(3)
    yaw = float(np.arctan2(goal[1] - pos[1], goal[0] - pos[0]))
    stop_run = 0
    travelled = 0.0
    result = RolloutResult(status="budget")

    for step in range(cfg.max_steps):
        if np.linalg.norm((goal - pos)[:2]) <= cfg.goal_radius:
            result.status = "goal"
            break
        rot = _yaw_matrix(yaw)
        v_cam = rot.T @ vel
        a_cam = rot.T @ acc
        v_cam[1] = a_cam[1] = 0.0
        state = VehicleState(v_cam, a_cam)
        frame = render(scene, Pose(tuple(pos), yaw), intr)
        probs = policy(frame, state)
        goal_cam = rot.T @ np.array([goal[0] - pos[0], goal[1] - pos[1], 0.0])
        action = select_action(probs, state, goal_cam, grid, cfg.threshold)

        if action == STOP:
            stop_run += 1
            target = _brake_target(v_cam, grid.max_accel)
        else:
            stop_run = 0
            target = grid.targets[action]

        # advance one replan interval along the chosen dynamics
        n_sub = max(2, int(round(cfg.replan_interval / grid.dt)))
        ts = np.linspace(0.0, cfg.replan_interval, n_sub + 1)
        p_cam, v_cam_t, a_cam_t = lag_profile(v_cam, a_cam, target, grid.tau, ts)
        if action == STOP:
            # brake to hover: freeze at the zero crossing instead of reversing
            along = v_cam_t @ (v_cam / max(np.linalg.norm(v_cam), 1e-9))
            crossed = np.flatnonzero(along <= 0.0)
            if crossed.size:
                k0 = int(crossed[0])
                p_cam[k0:] = p_cam[k0]
                v_cam_t[k0:] = 0.0
                a_cam_t[k0:] = 0.0
        world_pts = pos[None, :] + p_cam @ rot.T
        dmin = scene.distance_to_solids(world_pts[1:]).min() if n_sub else np.inf
        collided = dmin < safety.r_safe

        new_pos = world_pts[-1]
        new_vel = rot @ v_cam_t[-1]
        new_acc = rot @ a_cam_t[-1]
        speed = np.linalg.norm(new_vel)
        if speed > cfg.speed_cap:  # enforced flight-safety clamp
            new_vel *= cfg.speed_cap / speed
            speed = cfg.speed_cap
        travelled += float(np.linalg.norm(new_pos - pos))
        pos, vel, acc = new_pos, new_vel, new_acc
        if speed >= cfg.min_yaw_speed:
            yaw = float(np.arctan2(vel[1], vel[0]))
        else:
            yaw = float(np.arctan2(goal[1] - pos[1], goal[0] - pos[0]))
            if stop_run >= 2:
                # stuck facing a blocked direction: scan in place for a way out
                k = stop_run - 1
                offset = cfg.scan_step * ((k + 1) // 2) * (1 if k % 2 else -1)
                yaw += float(offset)

        result.steps.append({
            "step": step,
            "position": [float(x) for x in pos],
            "speed": float(speed),
            "action": int(action),
            "stopped": bool(action == STOP),
            "min_clearance": float(dmin),
            "n_unsafe": int((np.asarray(probs) >= cfg.threshold).sum()),
        })

        if collided:
            result.status = "collision"
            break
        if stop_run >= cfg.stop_limit:
            result.status = "stop_deadlock"
            break
    else:
        if np.linalg.norm((goal - pos)[:2]) <= cfg.goal_radius:
            result.status = "goal"

    result.distance_travelled = travelled
    return result
