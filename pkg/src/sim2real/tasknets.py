"""Downstream learners: the collision-prediction network (image + vehicle
state -> per-primitive probabilities), a small encoder-decoder segmentation
network, and the thresholded action-selection policy."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import nn
from .autodiff import Tensor
from .errors import ConfigError, ShapeError
from .primitives import PrimitiveGrid, VehicleState

STOP = -1  # select_action sentinel: no primitive clears the threshold


@dataclass(frozen=True)
class AvoidanceNetConfig:
    input_hw: tuple = (48, 64)      # full-scale default; experiments may shrink it
    conv_channels: tuple = (16, 32)
    hidden_width: int = 128
    n_hidden: int = 4               # warehouse configuration
    n_labels: int = 121
    state_dim: int = 6
    seed: int = 0


class AvoidanceNet(nn.Module):
    """Two conv/max-pool stages, state concatenated after flattening,
    ReLU hidden stack, sigmoid multilabel head."""

    def __init__(self, cfg: AvoidanceNetConfig):
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xAB01]))
        c1, c2 = cfg.conv_channels
        h, w = cfg.input_hw
        if h % 4 or w % 4:
            raise ConfigError("input extents must be divisible by 4 (two pooling stages)")
        self.cfg = cfg
        self.conv1 = nn.Conv2d(3, c1, 3, "conv1", rng, padding=1)
        self.conv2 = nn.Conv2d(c1, c2, 3, "conv2", rng, padding=1)
        feat = c2 * (h // 4) * (w // 4) + cfg.state_dim
        widths = [feat] + [cfg.hidden_width] * cfg.n_hidden
        self.hidden = [
            nn.Linear(widths[i], widths[i + 1], f"fc{i}", rng) for i in range(cfg.n_hidden)
        ]
        self.out = nn.Linear(widths[-1], cfg.n_labels, "out", rng)

    def forward(self, image: Tensor, state_vec: Tensor) -> Tensor:
        h, w = self.cfg.input_hw
        if image.data.shape[1:] != (3, h, w):
            raise ShapeError(f"expected (N,3,{h},{w}) images, got {image.data.shape}")
        x = ad.maxpool2d(self.conv1(image).relu(), 2)
        x = ad.maxpool2d(self.conv2(x).relu(), 2)
        x = x.reshape(x.data.shape[0], -1)
        x = ad.concat([x, state_vec], axis=1)
        for layer in self.hidden:
            x = layer(x).relu()
        return self.out(x).sigmoid()


@dataclass(frozen=True)
class SegNetConfig:
    input_hw: tuple = (48, 64)
    base_channels: int = 8
    n_classes: int = 6
    seed: int = 0


class SegNet(nn.Module):
    """Three-level encoder-decoder with skip connections; per-pixel logits."""

    def __init__(self, cfg: SegNetConfig):
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x5E61]))
        h, w = cfg.input_hw
        if h % 4 or w % 4:
            raise ConfigError("input extents must be divisible by 4 (two pooling levels)")
        c = cfg.base_channels
        self.cfg = cfg
        self.enc1 = nn.Conv2d(3, c, 3, "enc1", rng, padding=1)
        self.enc2 = nn.Conv2d(c, 2 * c, 3, "enc2", rng, padding=1)
        self.mid = nn.Conv2d(2 * c, 4 * c, 3, "mid", rng, padding=1)
        self.dec2 = nn.Conv2d(4 * c + 2 * c, 2 * c, 3, "dec2", rng, padding=1)
        self.dec1 = nn.Conv2d(2 * c + c, c, 3, "dec1", rng, padding=1)
        self.head = nn.Conv2d(c, cfg.n_classes, 3, "head", rng, padding=1)

    def forward(self, image: Tensor) -> Tensor:
        h, w = self.cfg.input_hw
        if image.data.shape[1:] != (3, h, w):
            raise ShapeError(f"expected (N,3,{h},{w}) images, got {image.data.shape}")
        e1 = self.enc1(image).relu()
        e2 = self.enc2(ad.maxpool2d(e1, 2)).relu()
        m = self.mid(ad.maxpool2d(e2, 2)).relu()
        d2 = self.dec2(ad.concat([ad.upsample2x(m), e2], axis=1)).relu()
        d1 = self.dec1(ad.concat([ad.upsample2x(d2), e1], axis=1)).relu()
        return self.head(d1)


@dataclass(frozen=True)
class TrainSpec:
    kind: str = "avoidance"        # avoidance | segmentation
    batch_size: int = 10
    iterations: int = 600
    lr: float = 2.5e-4
    weight_decay: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1 or self.iterations < 0 or self.lr < 0:
            raise ConfigError("batch size, iterations and lr must be positive")
        if self.kind not in ("avoidance", "segmentation"):
            raise ConfigError(f"unknown task kind {self.kind!r}")


@dataclass
class TaskDataset:
    """In-memory training arrays; images NCHW float in [0,1]."""

    images: np.ndarray
    states: np.ndarray | None = None   # (N, 6) for avoidance
    labels: np.ndarray | None = None   # (N, 121) binary for avoidance
    masks: np.ndarray | None = None    # (N, H, W) class ids for segmentation

    def __post_init__(self):
        if self.images.ndim != 4 or self.images.shape[1] != 3:
            raise ShapeError(f"images must be NCHW rgb, got {self.images.shape}")

    @property
    def size(self) -> int:
        return self.images.shape[0]


def _apply_weight_decay(net: nn.Module, decay: float) -> None:
    for p in net.parameters():
        if p.name.endswith(".w"):  # all weight terms carry L2; biases do not
            p.weight_decay = decay


def train_task_net(kind: str, dataset: TaskDataset, spec: TrainSpec, net=None):
    """Seed-deterministic training; returns (net, loss_history)."""
    if dataset.size == 0:
        raise ConfigError("dataset is empty")
    if kind == "avoidance":
        if dataset.labels is None or dataset.states is None:
            raise ConfigError("avoidance training needs states and label vectors")
        if net is None:
            hw = dataset.images.shape[2:]
            net = AvoidanceNet(AvoidanceNetConfig(input_hw=hw, seed=spec.seed))
    elif kind == "segmentation":
        if dataset.masks is None:
            raise ConfigError("segmentation training needs masks")
        if net is None:
            hw = dataset.images.shape[2:]
            n_cls = int(dataset.masks.max()) + 1
            net = SegNet(SegNetConfig(input_hw=hw, n_classes=max(n_cls, 2), seed=spec.seed))
    else:
        raise ConfigError(f"unknown task kind {kind!r}")

    _apply_weight_decay(net, spec.weight_decay)
    opt = nn.Adam(net.parameters(), spec.lr)
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 0x7A51]))
    history = []
    for _ in range(spec.iterations):
        idx = rng.integers(0, dataset.size, size=spec.batch_size)
        images = Tensor(dataset.images[idx], validate=False)
        if kind == "avoidance":
            pred = net(images, Tensor(dataset.states[idx], validate=False))
            loss = ad.loss_forward("log_multilabel", pred, dataset.labels[idx])
        else:
            logits = net(images)
            loss = ad.softmax_cross_entropy(logits, dataset.masks[idx])
        net.zero_grad()
        ad.backward(loss)
        opt.step()
        history.append(loss.item())
    return net, history


def predict_collision(net: AvoidanceNet, image_hwc: np.ndarray,
                      state: VehicleState) -> np.ndarray:
    """Per-primitive collision probabilities for one frame; pure inference."""
    image_hwc = np.asarray(image_hwc, dtype=np.float64)
    x = Tensor(image_hwc.transpose(2, 0, 1)[None], validate=False)
    s = Tensor(np.concatenate([state.v0, state.a0])[None], validate=False)
    return net(x, s).data[0]


def predict_segmentation(net: SegNet, image_hwc: np.ndarray) -> np.ndarray:
    """Per-pixel argmax class IDs; ties resolve to the lowest class."""
    image_hwc = np.asarray(image_hwc, dtype=np.float64)
    x = Tensor(image_hwc.transpose(2, 0, 1)[None], validate=False)
    logits = net(x).data[0]
    return np.argmax(logits, axis=0).astype(np.uint8)


def select_action(probs: np.ndarray, state: VehicleState, goal_dir: np.ndarray,
                  grid: PrimitiveGrid, threshold: float = 0.05) -> int:
    """Pick the sub-threshold primitive with the best progress toward the goal.

    Progress is the dot product of the trajectory endpoint with the unit
    goal direction (camera frame); progress ties break toward the smallest
    off-axis displacement, then the lowest index. Returns STOP when nothing
    clears the threshold: the caller should decelerate.
    """
    probs = np.asarray(probs, dtype=np.float64)
    if probs.shape != (grid.n_primitives,):
        raise ShapeError(f"expected {grid.n_primitives} probabilities, got {probs.shape}")
    if not (0.0 < threshold < 1.0):
        raise ConfigError("threshold must be in (0,1)")
    feasible = np.flatnonzero(probs < threshold)
    if feasible.size == 0:
        return STOP
    goal_dir = np.asarray(goal_dir, dtype=np.float64)
    norm = np.linalg.norm(goal_dir)
    unit = goal_dir / norm if norm > 0 else goal_dir
    endpoints = _grid_endpoints(state, grid)[feasible]
    progress = endpoints @ unit
    tied = np.flatnonzero(progress >= progress.max() - 1e-12)
    off_axis = np.linalg.norm(
        endpoints[tied] - progress[tied, None] * unit[None, :], axis=1
    )
    return int(feasible[tied[np.argmin(off_axis)]])


def _grid_endpoints(state: VehicleState, grid: PrimitiveGrid) -> np.ndarray:
    """Horizon-end positions for every primitive, one broadcast evaluation."""
    a0 = state.a0.copy()
    a0[1] = 0.0
    t = grid.horizon
    delta = a0[None, :] - grid.targets
    if grid.tau <= 0.0:
        return state.v0[None, :] * t + 0.5 * grid.targets * t * t
    decay = np.exp(-t / grid.tau)
    return (state.v0[None, :] * t + 0.5 * grid.targets * t * t
            + delta * grid.tau * (t - grid.tau * (1.0 - decay)))
