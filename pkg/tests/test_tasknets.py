import numpy as np
import pytest

from sim2real import nn
from sim2real.autodiff import Tensor
from sim2real.errors import ConfigError, ShapeError
from sim2real.primitives import VehicleState, build_grid
from sim2real.tasknets import (STOP, AvoidanceNet, AvoidanceNetConfig, SegNet,
                               SegNetConfig, TaskDataset, TrainSpec, predict_collision,
                               predict_segmentation, select_action, train_task_net)

GRID = build_grid()


def small_avoidance_dataset(rng, n=2, hw=(8, 8), n_labels=121):
    return TaskDataset(
        rng.uniform(0, 1, (n, 3, *hw)),
        states=rng.uniform(-1, 1, (n, 6)),
        labels=(rng.uniform(size=(n, n_labels)) < 0.3).astype(float),
    )


def test_avoidance_output_range(rng):
    net = AvoidanceNet(AvoidanceNetConfig(input_hw=(8, 8), conv_channels=(3, 4),
                                          hidden_width=8, n_hidden=2, seed=0))
    probs = predict_collision(net, rng.uniform(0, 1, (8, 8, 3)), VehicleState.at_rest())
    assert probs.shape == (121,)
    assert np.all(probs > 0) and np.all(probs < 1)


def test_avoidance_pure_inference(rng):
    net = AvoidanceNet(AvoidanceNetConfig(input_hw=(8, 8), conv_channels=(3, 4),
                                          hidden_width=8, n_hidden=1, seed=1))
    img = rng.uniform(0, 1, (8, 8, 3))
    st = VehicleState([0.1, 0, 1.0], [0, 0, 0])
    assert np.array_equal(predict_collision(net, img, st), predict_collision(net, img, st))


def test_avoidance_input_shape_guard(rng):
    net = AvoidanceNet(AvoidanceNetConfig(input_hw=(8, 8), conv_channels=(3, 4),
                                          hidden_width=8, n_hidden=1, seed=1))
    with pytest.raises(ShapeError):
        net(Tensor(rng.uniform(0, 1, (1, 3, 16, 16))), Tensor(np.zeros((1, 6))))


def test_train_lr_zero_identity(rng):
    ds = small_avoidance_dataset(rng)
    net = AvoidanceNet(AvoidanceNetConfig(input_hw=(8, 8), conv_channels=(3, 4),
                                          hidden_width=8, n_hidden=1, seed=2))
    before = [p.data.copy() for p in net.parameters()]
    net, _ = train_task_net("avoidance", ds, TrainSpec(iterations=4, batch_size=2,
                                                       lr=0.0, seed=2), net=net)
    assert all(np.array_equal(a, p.data) for a, p in zip(before, net.parameters()))


def test_train_overfits_single_record(rng):
    ds = small_avoidance_dataset(rng, n=1)
    net, hist = train_task_net(
        "avoidance", ds,
        TrainSpec(iterations=500, batch_size=1, lr=2.5e-4, weight_decay=0.0, seed=0))
    assert hist[-1] < 0.05
    probs = predict_collision(net, ds.images[0].transpose(1, 2, 0),
                              VehicleState(ds.states[0, :3], ds.states[0, 3:]))
    assert np.abs(probs - ds.labels[0]).max() < 0.05


def test_train_bitwise_deterministic(rng):
    ds = small_avoidance_dataset(rng, n=3)
    spec = TrainSpec(iterations=20, batch_size=2, seed=11)
    a, ha = train_task_net("avoidance", ds, spec)
    b, hb = train_task_net("avoidance", ds, spec)
    assert ha == hb
    assert all(np.array_equal(pa.data, pb.data)
               for pa, pb in zip(a.parameters(), b.parameters()))


def test_train_empty_dataset_rejected(rng):
    ds = small_avoidance_dataset(rng, n=1)
    empty = TaskDataset(ds.images[:0], states=ds.states[:0], labels=ds.labels[:0])
    with pytest.raises(ConfigError):
        train_task_net("avoidance", empty, TrainSpec(iterations=1))


def test_seg_output_contract(rng):
    net = SegNet(SegNetConfig(input_hw=(8, 8), base_channels=3, n_classes=5, seed=0))
    mask = predict_segmentation(net, rng.uniform(0, 1, (8, 8, 3)))
    assert mask.shape == (8, 8)
    assert mask.min() >= 0 and mask.max() < 5


def test_seg_uniform_logits_tie_break_lowest():
    net = SegNet(SegNetConfig(input_hw=(8, 8), base_channels=3, n_classes=4, seed=0))
    for p in net.parameters():
        p.tensor.data = np.zeros_like(p.data)  # all logits identical
    mask = predict_segmentation(net, np.random.default_rng(0).uniform(0, 1, (8, 8, 3)))
    assert np.all(mask == 0)


def test_seg_overfits_single_image(rng):
    img = rng.uniform(0, 1, (1, 3, 8, 8))
    mask = rng.integers(0, 3, (1, 8, 8))
    ds = TaskDataset(img, masks=mask)
    net, hist = train_task_net(
        "segmentation", ds,
        TrainSpec(kind="segmentation", iterations=400, batch_size=1, weight_decay=0.0,
                  seed=1))
    pred = predict_segmentation(net, img[0].transpose(1, 2, 0))
    assert (pred == mask[0]).mean() >= 0.99


def test_gradcheck_full_avoidance_architecture(rng):
    cfg = AvoidanceNetConfig(input_hw=(8, 8), conv_channels=(3, 4), hidden_width=8,
                             n_hidden=2, n_labels=9, seed=3)
    net = AvoidanceNet(cfg)
    x = Tensor(rng.uniform(0, 1, (2, 3, 8, 8)))
    s = Tensor(rng.uniform(-1, 1, (2, 6)))
    assert nn.check_gradients(net, (x, s), h=1e-4) < 1e-4


def test_select_action_all_blocked_stops():
    st = VehicleState([0, 0, 1.0], [0, 0, 0])
    assert select_action(np.full(121, 0.5), st, [0, 0, 1], GRID) == STOP
    assert select_action(np.full(121, 0.05), st, [0, 0, 1], GRID) == STOP  # not strict <


def test_select_action_goal_ahead_max_forward():
    st = VehicleState([0, 0, 1.0], [0, 0, 0])
    assert select_action(np.zeros(121), st, [0, 0, 1], GRID) == GRID.flat_index(5, 10)


def test_select_action_singleton_feasible():
    st = VehicleState([0, 0, 1.0], [0, 0, 0])
    probs = np.full(121, 0.9)
    probs[GRID.flat_index(2, 3)] = 0.01
    assert select_action(probs, st, [0, 0, 1], GRID) == GRID.flat_index(2, 3)


def test_select_action_never_exceeds_threshold(rng):
    st = VehicleState([0.5, 0, 2.0], [0, 0, 0])
    for _ in range(300):
        probs = rng.uniform(0, 1, 121)
        choice = select_action(probs, st, rng.normal(size=3), GRID, threshold=0.05)
        if choice != STOP:
            assert probs[choice] < 0.05


def test_select_action_threshold_partition_invariance(rng):
    st = VehicleState([0.2, 0, 1.5], [0, 0, 0])
    goal = np.array([0.3, 0, 1.0])
    probs = rng.uniform(0, 1, 121)
    base = select_action(probs, st, goal, GRID, threshold=0.05)
    squashed = np.where(probs < 0.05, probs * 0.2, 0.5 + probs * 0.4)
    assert select_action(squashed, st, goal, GRID, threshold=0.05) == base


def test_select_action_validates_inputs():
    st = VehicleState.at_rest()
    with pytest.raises(ShapeError):
        select_action(np.zeros(100), st, [0, 0, 1], GRID)
    with pytest.raises(ConfigError):
        select_action(np.zeros(121), st, [0, 0, 1], GRID, threshold=1.5)
