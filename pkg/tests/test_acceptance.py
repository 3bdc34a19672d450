"""Acceptance suite: one test per criterion, one printed pass/fail line each.

Run with `pytest tests/test_acceptance.py -s` to watch the lines live.
The three full-scale experiment runs are shared across criteria 5-7 via a
session fixture; everything is seeded and reproducible.
"""

import time

import numpy as np
import pytest

from conftest import tiny_run_config
from sim2real import nn
from sim2real.autodiff import Tensor
from sim2real.cyclegan import CycleGanConfig, build_nets
from sim2real.labeler import SafetyConfig, label_grid
from sim2real.labeler_oracle import oracle_label_grid
from sim2real.metrics import (ConfusionMatrix, ScoredLabels, auroc, auroc_pair_counting,
                              log_loss, miou)
from sim2real.pipeline import RunConfig, cmd_experiment, cmd_rollout
from sim2real.primitives import (VehicleState, build_grid, lag_profile,
                                 rk4_positions_batch)
from sim2real.scene import CameraIntrinsics, SceneSpec, generate_scene, render, sample_poses
from sim2real.tasknets import (STOP, AvoidanceNet, AvoidanceNetConfig, select_action)

pytestmark = pytest.mark.acceptance

EXPERIMENT_SEEDS = (0, 1, 2)


def _report(name: str, ok: bool, detail: str = ""):
    print(f"\n[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


@pytest.fixture(scope="session")
def experiment_reports(tmp_path_factory):
    reports = []
    for seed in EXPERIMENT_SEEDS:
        out = tmp_path_factory.mktemp(f"experiment_seed{seed}")
        t0 = time.perf_counter()
        reports.append(cmd_experiment(RunConfig(seed=seed), str(out)))
        print(f"\n  experiment seed {seed}: {time.perf_counter() - t0:.0f}s")
    return reports


# -- criterion 1: gradient correctness ----------------------------------------


def test_criterion_1_gradient_correctness():
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    worst = {}

    class LayerProbe(nn.Module):
        def __init__(self, kind, c_in, c_out, hw):
            self.kind = kind
            self.conv = nn.Conv2d(c_in, c_out, 3, "conv", rng, padding=1)
            self.lin = nn.Linear(c_in * hw[0] * hw[1], c_out, "lin", rng)

        def forward(self, x):
            if self.kind == "linear":
                return self.lin(x.reshape(x.data.shape[0], -1))
            h = self.conv(x)
            if self.kind == "conv2d":
                return h
            if self.kind == "maxpool2d":
                from sim2real.autodiff import maxpool2d
                return maxpool2d(h, 2)
            if self.kind == "relu":
                return (h + 0.37).relu()  # bias keeps probes off the kink
            if self.kind == "tanh":
                return h.tanh()
            return h.sigmoid()

    for kind in ("linear", "conv2d", "maxpool2d", "relu", "tanh", "sigmoid"):
        for _ in range(2):
            hw = tuple(int(rng.integers(2, 5)) * 2 for _ in range(2))  # <= 8x8
            c_in, c_out = int(rng.integers(1, 4)), int(rng.integers(1, 4))
            probe = LayerProbe(kind, c_in, c_out, hw)
            x = Tensor(rng.uniform(0.1, 0.9, (2, c_in, *hw)))
            err = nn.check_gradients(probe, x, h=1e-4)
            worst[kind] = max(worst.get(kind, 0.0), err)

    avoid = AvoidanceNet(AvoidanceNetConfig(input_hw=(8, 8), conv_channels=(3, 4),
                                            hidden_width=8, n_hidden=4, n_labels=13,
                                            seed=7))
    worst["avoidance_net"] = nn.check_gradients(
        avoid, (Tensor(rng.uniform(0, 1, (2, 3, 8, 8))),
                Tensor(rng.uniform(-1, 1, (2, 6)))), h=1e-4)

    nets = build_nets(CycleGanConfig(image_size=(8, 8), base_channels=4, res_blocks=2,
                                     disc_channels=(3, 4), seed=5))
    x = Tensor(rng.uniform(0.2, 0.8, (1, 3, 8, 8)))
    worst["generator_net"] = nn.check_gradients(nets.g_ab, x, h=1e-4)
    worst["discriminator_net"] = nn.check_gradients(nets.d_b, x, h=1e-4)

    elapsed = time.perf_counter() - t0
    peak = max(worst.values())
    ok = peak < 1e-5 and elapsed < 60.0
    _report("criterion 1 (gradient correctness)", ok,
            f"max rel err {peak:.2e} over {list(worst)} in {elapsed:.1f}s")


# -- criterion 2: labeler oracle equivalence -----------------------------------


def test_criterion_2_labeler_oracle_equivalence():
    t0 = time.perf_counter()
    intr = CameraIntrinsics.for_size(20, 15)
    grid = build_grid()
    safety = SafetyConfig()
    spec = SceneSpec()
    rng = np.random.default_rng(202)
    n_scenes, poses_per = 20, 50

    mismatches = 0
    compared = 0
    excluded = 0
    frames = 0
    for s in range(n_scenes):
        scene = generate_scene(spec, 5000 + s)
        for pose in sample_poses(scene, poses_per, seed=6000 + s):
            depth = render(scene, pose, intr).depth
            state = VehicleState(
                [rng.uniform(-1, 1), 0.0, rng.uniform(0, 3.5)],
                [rng.uniform(-1, 1), 0.0, rng.uniform(-1, 1)],
            )
            mine = label_grid(state, depth, intr, grid, safety)
            oracle, slack = oracle_label_grid(state, depth, intr, grid, safety)
            usable = slack > 1e-6
            mismatches += int((mine[usable] != oracle[usable]).sum())
            compared += int(usable.sum())
            excluded += int((~usable).sum())
            frames += 1

    elapsed = time.perf_counter() - t0
    ok = mismatches == 0 and frames == 1000 and elapsed < 300.0
    _report("criterion 2 (labeler oracle equivalence)", ok,
            f"{compared} labels agree across {frames} frames "
            f"({excluded} boundary-excluded, {mismatches} mismatches) in {elapsed:.0f}s")


# -- criterion 3: trajectory integration -----------------------------------------


def test_criterion_3_trajectory_integration():
    t0 = time.perf_counter()
    rng = np.random.default_rng(303)
    grid = build_grid()
    times = grid.sample_times()
    n = 1000
    v0 = rng.uniform(-3.5, 3.5, (n, 3)); v0[:, 1] = 0.0
    a0 = rng.uniform(-2, 2, (n, 3)); a0[:, 1] = 0.0
    targets = rng.uniform(-2, 2, (n, 3)); targets[:, 1] = 0.0
    taus = rng.uniform(0.05, 0.8, n)

    oracle = rk4_positions_batch(v0, a0, targets, taus, times)
    worst = 0.0
    for k in range(n):
        pos, _, _ = lag_profile(v0[k], a0[k], targets[k], taus[k], times)
        worst = max(worst, float(np.abs(pos - oracle[:, k, :]).max()))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-6 and elapsed < 10.0
    _report("criterion 3 (trajectory integration)", ok,
            f"max |analytic - RK4| = {worst:.2e} m over {n} primitives in {elapsed:.1f}s")


# -- criterion 4: metric oracles ---------------------------------------------------


def test_criterion_4_metric_oracles():
    t0 = time.perf_counter()
    rng = np.random.default_rng(404)
    worst_auroc = 0.0
    for n in (50, 500, 2000):
        scores = np.round(rng.uniform(size=n), 2)  # coarse grid forces ties
        labels = (rng.uniform(size=n) < 0.35).astype(int)
        labels[0], labels[1] = 0, 1
        s = ScoredLabels(scores, labels)
        worst_auroc = max(worst_auroc, abs(auroc(s) - auroc_pair_counting(s)))

    # hand-computed fixtures
    res = miou(ConfusionMatrix(np.array([[2, 2], [0, 0]])))
    miou_ok = (res.per_class[0] == 50.0 and res.per_class[1] == 0.0
               and res.class_average == 25.0 and res.global_average == 50.0)
    perfect = miou(ConfusionMatrix(np.diag([7, 3])))
    miou_ok &= perfect.class_average == 100.0 and perfect.global_average == 100.0

    ll = log_loss(ScoredLabels([0.8, 0.4], [1, 0]))
    ll_expected = -(np.log(0.8) + np.log(0.6)) / 2
    ll_ok = (abs(ll - ll_expected) < 1e-12
             and abs(log_loss(ScoredLabels(np.full(4, 0.5), [0, 1, 0, 1])) - np.log(2))
             < 1e-12)

    elapsed = time.perf_counter() - t0
    ok = worst_auroc < 1e-12 and miou_ok and ll_ok and elapsed < 10.0
    _report("criterion 4 (metric oracles)", ok,
            f"auroc vs pair counting {worst_auroc:.1e}, fixtures exact, {elapsed:.1f}s")


# -- criteria 5-7: the three-condition experiments -----------------------------------


def test_criterion_5_gan_realism(experiment_reports):
    cfg = RunConfig()
    assert tuple(cfg.image_size) == (32, 32)
    assert cfg.generate.n_sim >= 500 and cfg.generate.n_pseudo >= 500
    assert cfg.gan.iterations >= 2000
    passes = []
    details = []
    for rep in experiment_reports:
        g = rep["gan"]
        seed_ok = g["l1_ratio"] <= 0.7 and g["cycle_final"] < g["cycle_at_10"]
        passes.append(seed_ok)
        details.append(f"seed {rep['seed']}: ratio {g['l1_ratio']:.3f}, "
                       f"cycle {g['cycle_at_10']:.3f}->{g['cycle_final']:.3f}")
    ok = sum(passes) >= 2
    _report("criterion 5 (translation realism proxy)", ok,
            "; ".join(details) + f" -> {sum(passes)}/3 seeds")


def test_criterion_6_downstream_ordering(experiment_reports):
    ordering, bound = [], []
    details = []
    for rep in experiment_reports:
        rows = {r["condition"]: r for r in rep["avoidance"]}
        conv, sim, real = rows["converted"], rows["simulated"], rows["real"]
        ordering.append(conv["auroc"] > sim["auroc"]
                        and conv["log_loss"] < sim["log_loss"])
        bound.append(real["auroc"] >= conv["auroc"] - 0.05)
        details.append(f"seed {rep['seed']}: auroc c/s/r "
                       f"{conv['auroc']:.3f}/{sim['auroc']:.3f}/{real['auroc']:.3f}, "
                       f"logloss c/s {conv['log_loss']:.3f}/{sim['log_loss']:.3f}")
    ok = sum(ordering) >= 2 and sum(bound) >= 2
    _report("criterion 6 (downstream ordering)", ok,
            "; ".join(details) + f" -> ordering {sum(ordering)}/3, "
            f"real-proxy bound {sum(bound)}/3")


def test_criterion_7_segmentation_ordering(experiment_reports):
    passes = []
    details = []
    for rep in experiment_reports:
        rows = {r["condition"]: r for r in rep["segmentation"]}
        conv, sim = rows["converted"]["miou_global"], rows["simulated"]["miou_global"]
        passes.append(conv >= 1.2 * sim)
        details.append(f"seed {rep['seed']}: mIoU converted {conv:.1f} vs sim {sim:.1f} "
                       f"(x{conv / sim if sim else float('inf'):.2f})")
    ok = sum(passes) >= 2
    _report("criterion 7 (segmentation ordering)", ok,
            "; ".join(details) + f" -> {sum(passes)}/3 seeds")


# -- criterion 8: closed-loop safety ----------------------------------------------


def test_criterion_8_closed_loop_safety():
    t0 = time.perf_counter()
    cfg = RunConfig()
    goals = 0
    collisions = 0
    statuses = []
    for i in range(15):
        scene = generate_scene(cfg.scene, 100 + i)
        goal_dist = float(np.linalg.norm(scene.goal[:2] - scene.start[:2]))
        assert goal_dist >= 60.0, f"scene {i}: goal only {goal_dist:.0f} m away"
        result = cmd_rollout(cfg, scene_seed=100 + i, policy_kind="oracle")
        goals += result.reached_goal
        collisions += result.collided
        statuses.append(result.status)
        assert max(s["speed"] for s in result.steps) <= cfg.rollout.speed_cap + 1e-9

    # the action filter never returns a primitive at or above threshold
    rng = np.random.default_rng(808)
    grid = build_grid()
    state = VehicleState([0.4, 0.0, 2.0], [0.0, 0.0, 0.0])
    goal_dir = np.array([0.1, 0.0, 1.0])
    violations = 0
    stops = 0
    for _ in range(100_000):
        probs = rng.uniform(0, 1, 121)
        choice = select_action(probs, state, goal_dir, grid, threshold=0.05)
        if choice == STOP:
            stops += 1
            if (probs < 0.05).any():
                violations += 1
        elif probs[choice] >= 0.05:
            violations += 1

    elapsed = time.perf_counter() - t0
    ok = collisions == 0 and goals >= 12 and violations == 0
    _report("criterion 8 (closed-loop safety)", ok,
            f"{goals}/15 goals, {collisions} collisions ({statuses.count('stop_deadlock')}"
            f" deadlock, {statuses.count('budget')} budget), select_action violations "
            f"{violations} over 1e5 vectors ({stops} STOPs) in {elapsed:.0f}s")


# -- criterion 9: determinism --------------------------------------------------------


def test_criterion_9_experiment_determinism(tmp_path):
    from sim2real.pipeline import GenerateConfig
    cfg = tiny_run_config(seed=77,
                          generate=GenerateConfig(n_scenes=1, n_sim=10, n_pseudo=10,
                                                  n_paired=4, n_test=6))
    a = tmp_path / "run_a"
    b = tmp_path / "run_b"
    cmd_experiment(cfg, str(a))
    cmd_experiment(cfg, str(b))

    compared = 0
    differing = []
    for pattern in ("*.jsonl", "*.gsrt", "report.json", "report.txt", "*.ppm", "*.pgm"):
        rels = sorted(p.relative_to(a) for p in a.rglob(pattern) if p.is_file())
        rels_b = sorted(p.relative_to(b) for p in b.rglob(pattern) if p.is_file())
        assert rels == rels_b, f"file sets differ for {pattern}"
        for rel in rels:
            compared += 1
            if (a / rel).read_bytes() != (b / rel).read_bytes():
                differing.append(str(rel))
    ok = compared > 0 and not differing
    _report("criterion 9 (experiment determinism)", ok,
            f"{compared} files byte-identical across two runs"
            + (f"; DIFFER: {differing[:5]}" if differing else ""))
