"""Acceleration-target motion primitives and their induced trajectories.

Actions form an odd-by-odd grid of planar acceleration targets in the
camera frame (x right, y down, z forward); the vehicle response is a
first-order lag on acceleration with time constant tau, integrated in
closed form so trajectories can be resampled exactly at any time.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

SPEED_CAP = 3.5  # m/s, flight-safety limit used by rollouts and augmentation


@dataclass
class VehicleState:
    """Instantaneous velocity and acceleration, camera frame, m/s and m/s^2."""

    v0: np.ndarray
    a0: np.ndarray

    def __post_init__(self):
        self.v0 = np.asarray(self.v0, dtype=np.float64).reshape(3)
        self.a0 = np.asarray(self.a0, dtype=np.float64).reshape(3)
        if not (np.all(np.isfinite(self.v0)) and np.all(np.isfinite(self.a0))):
            raise ConfigError("vehicle state must be finite")

    @staticmethod
    def at_rest() -> "VehicleState":
        return VehicleState(np.zeros(3), np.zeros(3))


@dataclass
class PrimitiveGrid:
    """Grid of (lateral, 0, forward) acceleration targets plus timing config."""

    n_lat: int = 11
    n_fwd: int = 11
    max_accel: float = 2.0
    horizon: float = 1.5
    dt: float = 0.05
    tau: float = 0.3
    targets: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.n_lat % 2 == 0 or self.n_fwd % 2 == 0:
            raise ConfigError("grid dimensions must be odd so the center action is zero")
        if self.n_lat < 1 or self.n_fwd < 1 or self.max_accel <= 0:
            raise ConfigError("grid extents and max_accel must be positive")
        # built symmetrically about the center so target(i) == -target(n-1-i) exactly
        lat = (np.arange(self.n_lat) - self.n_lat // 2) * (self.max_accel / (self.n_lat // 2))
        fwd = (np.arange(self.n_fwd) - self.n_fwd // 2) * (self.max_accel / (self.n_fwd // 2))
        targets = np.zeros((self.n_lat * self.n_fwd, 3))
        for i in range(self.n_lat):
            for j in range(self.n_fwd):
                targets[self.flat_index(i, j)] = (lat[i], 0.0, fwd[j])
        self.targets = targets

    @property
    def n_primitives(self) -> int:
        return self.n_lat * self.n_fwd

    def flat_index(self, i: int, j: int) -> int:
        return self.n_fwd * i + j

    def target(self, i: int, j: int) -> np.ndarray:
        return self.targets[self.flat_index(i, j)]

    def sample_times(self) -> np.ndarray:
        n = int(round(self.horizon / self.dt))
        if abs(n * self.dt - self.horizon) > 1e-9:
            raise ConfigError(f"dt={self.dt} does not divide horizon={self.horizon}")
        return np.linspace(0.0, self.horizon, n + 1)


def build_grid(n_lat: int = 11, n_fwd: int = 11, max_accel: float = 2.0,
               horizon: float = 1.5, dt: float = 0.05, tau: float = 0.3) -> PrimitiveGrid:
    return PrimitiveGrid(n_lat, n_fwd, max_accel, horizon, dt, tau)


def lag_profile(v0: np.ndarray, a0: np.ndarray, target: np.ndarray, tau: float,
                t: np.ndarray):
    """Closed-form (position, velocity, acceleration) at times t.

    a(t) = target + (a0 - target) e^(-t/tau); v and p follow by exact
    integration. tau = 0 degenerates to constant target acceleration.
    """
    t = np.asarray(t, dtype=np.float64)[..., None]
    v0 = np.asarray(v0, dtype=np.float64)
    a0 = np.asarray(a0, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    delta = a0 - target
    if tau <= 0.0:
        decay = np.where(t > 0, 0.0, 1.0)
        acc = target + delta * decay
        vel = v0 + target * t
        pos = v0 * t + 0.5 * target * t * t
        return pos, vel, acc
    decay = np.exp(-t / tau)
    acc = target + delta * decay
    vel = v0 + target * t + delta * tau * (1.0 - decay)
    pos = v0 * t + 0.5 * target * t * t + delta * tau * (t - tau * (1.0 - decay))
    return pos, vel, acc


@dataclass
class Trajectory:
    """Time-sampled path of one primitive, starting at the camera origin.

    Carries its generating parameters so callers can resample the exact
    dynamics at a finer time step than the stored samples.
    """

    times: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    v0: np.ndarray
    a0: np.ndarray
    target: np.ndarray
    tau: float

    def positions_at(self, t: np.ndarray) -> np.ndarray:
        pos, _, _ = lag_profile(self.v0, self.a0, self.target, self.tau, t)
        return pos

    def states_at(self, t: np.ndarray):
        return lag_profile(self.v0, self.a0, self.target, self.tau, t)

    @property
    def endpoint(self) -> np.ndarray:
        return self.positions[-1]


def simulate_primitive(state: VehicleState, target: np.ndarray,
                       grid: PrimitiveGrid) -> Trajectory:
    """Integrate one acceleration target from the given state; planar motion."""
    target = np.asarray(target, dtype=np.float64).reshape(3)
    a0 = state.a0.copy()
    a0[1] = 0.0  # vertical acceleration is out of the action vocabulary
    times = grid.sample_times()
    pos, vel, _ = lag_profile(state.v0, a0, target, grid.tau, times)
    return Trajectory(times, pos, vel, state.v0.copy(), a0, target, grid.tau)


def grid_trajectories(state: VehicleState, grid: PrimitiveGrid) -> list[Trajectory]:
    """One trajectory per primitive, in flat-index order."""
    return [simulate_primitive(state, grid.targets[k], grid) for k in range(grid.n_primitives)]


def rk4_positions_batch(v0, a0, target, tau, times, h: float = 1e-3) -> np.ndarray:
    """Batched RK4 oracle: positions (T, B, 3) for B primitives at shared times."""
    v0 = np.atleast_2d(np.asarray(v0, dtype=np.float64))
    a0 = np.atleast_2d(np.asarray(a0, dtype=np.float64))
    target = np.atleast_2d(np.asarray(target, dtype=np.float64))
    tau = np.asarray(tau, dtype=np.float64).reshape(-1, 1)
    times = np.asarray(times, dtype=np.float64)
    if np.any(tau <= 0.0):
        raise ConfigError("batched oracle requires tau > 0; use the scalar path for tau=0")

    def deriv(state):
        p, v, a = state
        return np.stack([v, a, (target - a) / tau])

    out = np.zeros((times.size, v0.shape[0], 3))
    state = np.stack([np.zeros_like(v0), v0, a0])
    t_now = 0.0
    order = np.argsort(times)
    for idx in order:
        span = times[idx] - t_now
        if span > 0:
            n = max(1, int(np.ceil(span / h)))
            step = span / n
            for _ in range(n):
                k1 = deriv(state)
                k2 = deriv(state + 0.5 * step * k1)
                k3 = deriv(state + 0.5 * step * k2)
                k4 = deriv(state + step * k3)
                state = state + (step / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            t_now = times[idx]
        out[idx] = state[0]
    return out


def rk4_positions(v0, a0, target, tau, times, h: float = 1e-3) -> np.ndarray:
    """Independent numeric oracle: RK4 on (p, v, a) with da/dt = (target - a)/tau.

    Integrates to each requested sample time on a fixed grid of step <= h.
    """
    v0 = np.asarray(v0, dtype=np.float64)
    a0 = np.asarray(a0, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    times = np.asarray(times, dtype=np.float64)

    def deriv(state):
        p, v, a = state
        if tau <= 0.0:
            return np.stack([v, target, np.zeros(3)])
        return np.stack([v, a, (target - a) / tau])

    out = np.zeros((times.size, 3))
    state = np.stack([np.zeros(3), v0, target if tau <= 0.0 else a0])
    t_now = 0.0
    for idx in np.argsort(times):
        t_target = times[idx]
        span = t_target - t_now
        if span > 0:
            n = max(1, int(np.ceil(span / h)))
            step = span / n
            for _ in range(n):
                k1 = deriv(state)
                k2 = deriv(state + 0.5 * step * k1)
                k3 = deriv(state + 0.5 * step * k2)
                k4 = deriv(state + step * k3)
                state = state + (step / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            t_now = t_target
        out[idx] = state[0]
    return out
