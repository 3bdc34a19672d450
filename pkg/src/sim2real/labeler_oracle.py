"""Brute-force reference labeler used by audits and the acceptance suite.

Deliberately simple: per-primitive loops, exhaustive pairwise distances
against the full back-projected cloud (no spatial index), scalar-style
projection checks, and its own copy of the lag kinematics. It also
reports, per primitive, the smallest slack to any decision threshold so
ties within floating-point reach of a boundary can be excluded.
"""

from __future__ import annotations

import numpy as np

from .labeler import ORIGIN_EPS, SafetyConfig, depth_to_points
from .primitives import PrimitiveGrid, VehicleState
from .scene import CameraIntrinsics


def _lag_positions(v0, a0, target, tau, t):
    """Closed-form positions, written out independently of the production path."""
    t = np.asarray(t, dtype=np.float64)[:, None]
    delta = a0 - target
    if tau <= 0.0:
        return v0 * t + 0.5 * target * t * t
    decay = np.exp(-t / tau)
    return v0 * t + 0.5 * target * t * t + delta * tau * (t - tau * (1.0 - decay))


def oracle_label_grid(state: VehicleState, depth: np.ndarray, intr: CameraIntrinsics,
                      grid: PrimitiveGrid, safety: SafetyConfig):
    """Labels plus per-primitive boundary slack.

    Slack is min over samples of the distance to the nearest decision
    threshold (point margin, surface-minus-margin crossing, trust range);
    comparisons within slack of a boundary are not trustworthy ties.
    """
    depth = np.asarray(depth, dtype=np.float64)
    cloud = depth_to_points(depth, intr)
    times = safety.check_times(grid.horizon)
    margin = safety.margin
    trust = safety.trust_range(intr)
    a0 = state.a0.copy()
    a0[1] = 0.0

    labels = np.zeros(grid.n_primitives, dtype=np.uint8)
    slacks = np.full(grid.n_primitives, np.inf)
    cloud_sq = (cloud * cloud).sum(axis=1) if cloud.shape[0] else None
    for k in range(grid.n_primitives):
        pts = _lag_positions(state.v0, a0, grid.targets[k], grid.tau, times)[1:]
        unsafe = False
        slack = np.inf

        if cloud.shape[0] > 0:
            d2 = (
                (pts * pts).sum(axis=1)[:, None]
                + cloud_sq[None, :]
                - 2.0 * (pts @ cloud.T)
            )
            dmin = float(np.sqrt(max(d2.min(), 0.0)))
            slack = min(slack, abs(dmin - margin))
            if dmin < margin:
                unsafe = True

        z = pts[:, 2]
        near_origin = np.linalg.norm(pts, axis=1) < ORIGIN_EPS
        if safety.frustum_exit_unsafe and bool(((z <= 0.0) & ~near_origin).any()):
            unsafe = True
        front = (z > 0.0) & ~near_origin
        if front.any():
            zf = z[front]
            u = intr.fx * pts[front, 0] / zf + intr.cx
            v = intr.fy * pts[front, 1] / zf + intr.cy
            pu = np.rint(u).astype(np.int64)
            pv = np.rint(v).astype(np.int64)
            inside = (pu >= 0) & (pu <= intr.width - 1) & (pv >= 0) & (pv <= intr.height - 1)
            if safety.frustum_exit_unsafe and bool((~inside).any()):
                unsafe = True
            if inside.any():
                din = depth[pv[inside], pu[inside]]
                zin = zf[inside]
                observed = din > 0.0
                if observed.any():
                    gap = zin[observed] - (din[observed] - margin)
                    slack = min(slack, float(np.abs(gap).min()))
                    if bool((gap >= 0.0).any()):
                        unsafe = True
                unknown = ~observed
                if unknown.any():
                    gap = zin[unknown] - trust
                    slack = min(slack, float(np.abs(gap).min()))
                    if bool((gap > 0.0).any()):
                        unsafe = True

        labels[k] = 1 if unsafe else 0
        slacks[k] = slack
    return labels, slacks
