import numpy as np
import pytest

from sim2real.errors import ConfigError, ShapeError
from sim2real.labeler import (SafetyConfig, VelocityDistribution, augment_velocity,
                              depth_to_points, label_grid, label_primitive)
from sim2real.labeler_oracle import oracle_label_grid
from sim2real.primitives import VehicleState, build_grid, simulate_primitive
from sim2real.scene import CameraIntrinsics, SceneSpec, generate_scene, render, sample_poses

INTR = CameraIntrinsics(64, 48, 55.4, 55.4, 32.0, 24.0, 10.0)
GRID = build_grid()
SAFETY = SafetyConfig()


def full_depth(value, intr=INTR):
    return np.full((intr.height, intr.width), value)


def test_depth_to_points_principal_point():
    d = np.zeros((48, 64))
    d[24, 32] = 2.0
    np.testing.assert_allclose(depth_to_points(d, INTR), [[0.0, 0.0, 2.0]])


def test_depth_to_points_empty():
    assert depth_to_points(np.zeros((48, 64)), INTR).shape == (0, 3)


def test_depth_to_points_one_focal_off_axis():
    intr = CameraIntrinsics(64, 48, 16.0, 16.0, 32.0, 24.0, 10.0)
    d = np.zeros((48, 64))
    d[24, 48] = 3.0  # u = cx + fx
    np.testing.assert_allclose(depth_to_points(d, intr), [[3.0, 0.0, 3.0]])


def test_depth_to_points_shape_check():
    with pytest.raises(ShapeError):
        depth_to_points(np.zeros((10, 10)), INTR)


def test_wall_ahead_coast_unsafe():
    # wall at 2 m, coasting at 2 m/s reaches 3 m
    labels = label_grid(VehicleState([0, 0, 2.0], [0, 0, 0]), full_depth(2.0),
                        INTR, GRID, SAFETY)
    assert labels[GRID.flat_index(5, 5)] == 1


def test_open_space_slow_coast_safe():
    labels = label_grid(VehicleState([0, 0, 0.3], [0, 0, 0]), full_depth(10.0),
                        INTR, GRID, SAFETY)
    assert labels[GRID.flat_index(5, 5)] == 0


def test_frustum_exit_left_brake_corner():
    # only in the near-constant-acceleration regime does the hardest-left
    # (bank + brake) primitive leave the ~60 deg frustum before 1.5 s
    grid = build_grid(tau=0.05)
    labels = label_grid(VehicleState([0, 0, 3.4], [0, 0, 0]), full_depth(10.0),
                        INTR, grid, SAFETY)
    assert labels[grid.flat_index(0, 0)] == 1


def test_backward_motion_unsafe():
    labels = label_grid(VehicleState([0, 0, 0], [0, 0, 0]), full_depth(10.0),
                        INTR, GRID, SAFETY)
    assert labels[GRID.flat_index(5, 0)] == 1  # pure braking from rest reverses


def test_surrounded_all_unsafe():
    labels = label_grid(VehicleState([0, 0, 0.5], [0, 0, 0]), full_depth(0.45),
                        INTR, GRID, SAFETY)
    assert labels.sum() == 121


def test_half_blocked_asymmetry():
    depth = full_depth(10.0)
    depth[:, 40:] = 2.5  # wall on the right half of the image
    labels = label_grid(VehicleState([0, 0, 2.0], [0, 0, 0]), depth, INTR, GRID, SAFETY)
    lm = labels.reshape(11, 11)
    assert lm[0, 5] == 0 and lm[10, 5] == 1


def test_mirror_symmetric_labels():
    # pixel-center principal point so column u mirrors to 63-u exactly
    intr = CameraIntrinsics(64, 48, 55.4, 55.4, 31.5, 23.5, 10.0)
    depth = full_depth(10.0, intr)
    depth[:, :20] = 3.0
    depth[:, 44:] = 3.0  # symmetric side walls
    labels = label_grid(VehicleState([0, 0, 2.5], [0, 0, 0]), depth, intr, GRID, SAFETY)
    lm = labels.reshape(11, 11)
    np.testing.assert_array_equal(lm, lm[::-1, :])


def test_label_primitive_matches_label_grid():
    sc = generate_scene(SceneSpec(), 21)
    pose = sample_poses(sc, 1, seed=2)[0]
    out = render(sc, pose, INTR)
    st = VehicleState([0.4, 0, 2.2], [0, 0, 0])
    labels = label_grid(st, out.depth, INTR, GRID, SAFETY)
    cloud = depth_to_points(out.depth, INTR)
    for k in (0, 17, 60, 101):
        traj = simulate_primitive(st, GRID.targets[k], GRID)
        assert label_primitive(traj, cloud, out.depth, INTR, SAFETY) == labels[k]


def test_zero_depth_trust_rule():
    depth = np.zeros((48, 64))  # nothing observed anywhere
    short_trust = SafetyConfig(free_space_trust=0.5)
    labels = label_grid(VehicleState([0, 0, 2.0], [0, 0, 0]), depth, INTR, GRID,
                        short_trust)
    assert labels[GRID.flat_index(5, 5)] == 1  # coast passes 0.5 m into unknown
    long_trust = SafetyConfig(free_space_trust=20.0)
    labels2 = label_grid(VehicleState([0, 0, 2.0], [0, 0, 0]), depth, INTR, GRID,
                         long_trust)
    assert labels2[GRID.flat_index(5, 5)] == 0


def test_occlusion_rule_boundary():
    # wall at exactly reach + margin: approaching its margin shell flips the label
    depth = full_depth(10.0)
    st = VehicleState([0, 0, 1.0], [0, 0, 0])  # coast reaches 1.5 m
    near = full_depth(1.9)   # 1.5 >= 1.9 - 0.6 -> occluded
    far = full_depth(2.2)    # 1.5 < 2.2 - 0.6 -> clear
    assert label_grid(st, near, INTR, GRID, SAFETY)[GRID.flat_index(5, 5)] == 1
    assert label_grid(st, far, INTR, GRID, SAFETY)[GRID.flat_index(5, 5)] == 0


def test_margin_monotonicity():
    sc = generate_scene(SceneSpec(), 31)
    pose = sample_poses(sc, 1, seed=9)[0]
    out = render(sc, pose, INTR)
    st = VehicleState([0.5, 0, 2.8], [0, 0, 0])
    small = label_grid(st, out.depth, INTR, GRID, SafetyConfig(r_safe=0.3))
    large = label_grid(st, out.depth, INTR, GRID, SafetyConfig(r_safe=0.8))
    assert np.all(large >= small)


def test_speed_monotonicity_frontal_wall():
    depth = full_depth(6.0)
    labels = []
    for speed in (0.5, 1.5, 2.5, 3.5):
        lab = label_grid(VehicleState([0, 0, speed], [0, 0, 0]), depth, INTR, GRID, SAFETY)
        labels.append(lab[GRID.flat_index(5, 5)])
    assert labels == sorted(labels)  # once unsafe, faster stays unsafe


def test_augment_identity_draw():
    depth = full_depth(4.0)
    st = VehicleState([0.2, 0, 1.0], [0, 0, 0])
    base = label_grid(st, depth, INTR, GRID, SAFETY)
    dist = VelocityDistribution(forward=(1.0, 1.0), lateral=(0.2, 0.2))
    variants = augment_velocity(st, depth, INTR, GRID, SAFETY, 1, dist, seed=5)
    assert len(variants) == 1
    vstate, vlabels = variants[0]
    np.testing.assert_array_equal(vstate.v0, st.v0)
    np.testing.assert_array_equal(vlabels, base)


def test_augment_deterministic():
    depth = full_depth(5.0)
    st = VehicleState([0, 0, 1.0], [0, 0, 0])
    dist = VelocityDistribution()
    a = augment_velocity(st, depth, INTR, GRID, SAFETY, 4, dist, seed=8)
    b = augment_velocity(st, depth, INTR, GRID, SAFETY, 4, dist, seed=8)
    for (sa, la), (sb, lb) in zip(a, b):
        assert np.array_equal(sa.v0, sb.v0) and np.array_equal(la, lb)


def test_augment_speed_flips_frontal_label():
    # obstacle 3 m ahead: 3.4 m/s coast covers 5.1 m (unsafe), 0.1 m/s covers 0.15 m
    depth = full_depth(3.0)
    st = VehicleState([0, 0, 1.0], [0, 0, 0])
    fast = augment_velocity(st, depth, INTR, GRID, SAFETY, 1,
                            VelocityDistribution((3.4, 3.4), (0.0, 0.0)), seed=1)
    slow = augment_velocity(st, depth, INTR, GRID, SAFETY, 1,
                            VelocityDistribution((0.1, 0.1), (0.0, 0.0)), seed=1)
    coast = GRID.flat_index(5, 5)
    assert fast[0][1][coast] == 1
    assert slow[0][1][coast] == 0


def test_augment_requires_positive_variants():
    with pytest.raises(ConfigError):
        augment_velocity(VehicleState.at_rest(), full_depth(5.0), INTR, GRID, SAFETY,
                         0, VelocityDistribution(), seed=0)


def test_oracle_agreement_on_scenes():
    sc = generate_scene(SceneSpec(), 77)
    rng = np.random.default_rng(4)
    intr = CameraIntrinsics.for_size(32, 24)
    for pose in sample_poses(sc, 6, seed=15):
        out = render(sc, pose, intr)
        st = VehicleState([rng.uniform(-1, 1), 0, rng.uniform(0, 3.5)], [0, 0, 0])
        mine = label_grid(st, out.depth, intr, GRID, SAFETY)
        oracle, slack = oracle_label_grid(st, out.depth, intr, GRID, SAFETY)
        usable = slack > 1e-6
        np.testing.assert_array_equal(mine[usable], oracle[usable])


def test_back_projection_lies_on_solid_surfaces():
    sc = generate_scene(SceneSpec(), 55)
    pose = sample_poses(sc, 1, seed=3)[0]
    out = render(sc, pose, INTR)
    cloud_cam = depth_to_points(out.depth, INTR)
    world = np.asarray(pose.position) + cloud_cam @ pose.rotation().T
    on_ground = np.abs(world[:, 2]) < 1e-6
    off_ground = world[~on_ground]
    if off_ground.size:
        dist = sc.distance_to_solids(off_ground)
        assert dist.max() < 1e-6


def test_safety_config_validation():
    with pytest.raises(ConfigError):
        SafetyConfig(r_safe=0.0)
    with pytest.raises(ConfigError):
        SafetyConfig(sigma_pos=-0.1)
    assert SafetyConfig().trust_range(INTR) == pytest.approx(10.5)
