"""Fly the oracle-labeler policy across a warehouse.

Closed loop at 0.5 s replanning: render depth at the current pose, label
all 121 primitives, pick the sub-threshold action with the best goal
progress (STOP and brake to hover if none), advance along its dynamics.
"""

import os

from sim2real.pipeline import RunConfig, cmd_rollout

os.makedirs("demo_out", exist_ok=True)
cfg = RunConfig()
result = cmd_rollout(cfg, scene_seed=101, policy_kind="oracle",
                     log_path="demo_out/flight_log.jsonl")

print(f"status: {result.status}")
print(f"steps: {len(result.steps)}  distance: {result.distance_travelled:.1f} m")
print(f"top speed: {max(s['speed'] for s in result.steps):.2f} m/s "
      f"(cap {cfg.rollout.speed_cap})")
print(f"closest approach to any solid: "
      f"{min(s['min_clearance'] for s in result.steps):.2f} m "
      f"(collision radius {cfg.safety.r_safe})")
stops = sum(s["stopped"] for s in result.steps)
print(f"STOP/brake intervals: {stops}")

print("\nfirst steps:")
for s in result.steps[:8]:
    print(f"  t={0.5 * s['step']:5.1f}s pos=({s['position'][0]:5.1f},"
          f"{s['position'][1]:4.1f}) speed={s['speed']:.2f} "
          f"unsafe={s['n_unsafe']:3d}/121 action={s['action']}")
print("full log: demo_out/flight_log.jsonl")
