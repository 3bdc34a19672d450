"""Explore the 11x11 acceleration-target action set.

Each primitive is a 1.5 s trajectory under a first-order acceleration lag,
integrated in closed form. The RK4 oracle cross-checks the integration.
"""

import numpy as np

from sim2real.primitives import (VehicleState, build_grid, grid_trajectories,
                                 rk4_positions, simulate_primitive)

grid = build_grid()
print(f"{grid.n_primitives} primitives, targets in "
      f"[{-grid.max_accel}, {grid.max_accel}] m/s^2 per axis, "
      f"horizon {grid.horizon} s, tau {grid.tau} s")

state = VehicleState(v0=[0.0, 0.0, 2.0], a0=[0.0, 0.0, 0.0])  # 2 m/s forward
trajs = grid_trajectories(state, grid)

print("\nendpoint map (forward meters at 1.5 s, lateral index across):")
for j in reversed(range(0, 11, 2)):          # forward target rows, top = accelerate
    cells = []
    for i in range(0, 11, 2):
        end = trajs[grid.flat_index(i, j)].endpoint
        cells.append(f"({end[0]:+5.2f},{end[2]:5.2f})")
    print("  ".join(cells))

# closed form vs numeric integration
tr = simulate_primitive(state, grid.target(8, 9), grid)
oracle = rk4_positions(state.v0, state.a0, grid.target(8, 9), grid.tau, tr.times)
print(f"\nclosed-form vs RK4 max deviation: {np.abs(tr.positions - oracle).max():.2e} m")

# mirror symmetry is exact in floating point
left = simulate_primitive(state, grid.target(2, 7), grid)
right = simulate_primitive(state, grid.target(8, 7), grid)
flip = np.array([-1.0, 1.0, 1.0])
print(f"mirror symmetry exact: {np.array_equal(left.positions * flip, right.positions)}")
