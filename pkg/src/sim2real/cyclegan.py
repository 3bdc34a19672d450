"""Unpaired image-to-image translation with a two-generator adversarial
objective plus cycle consistency.

The two generators map between the simulated and pseudo-real domains;
each discriminator scores one domain in (0,1). Discriminators take
ascent steps on the adversarial value, generators take descent steps on
the weighted total (adversarial terms plus cycle reconstruction), with
the opposing side frozen. Training is seed-deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import nn
from .autodiff import Tensor
from .errors import ConfigError, NumericError, ShapeError


@dataclass(frozen=True)
class CycleGanConfig:
    image_size: tuple = (32, 32)       # (height, width); divisible by 2
    cycle_weight: float = 4.0
    iterations: int = 2000
    batch_size: int = 1
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    optimizer: str = "adam"
    base_channels: int = 12
    res_blocks: int = 2
    disc_channels: tuple = (8, 16)
    head_init_std: float = 1.5         # logit-delta scale at init; see Generator
    d_steps: int = 1
    g_steps: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.cycle_weight <= 0:
            raise ConfigError("cycle_weight must be positive")
        h, w = self.image_size
        if h % 2 or w % 2:
            raise ConfigError("image extents must be divisible by the downsampling factor")
        if self.batch_size < 1 or self.iterations < 0:
            raise ConfigError("batch_size and iterations must be positive")
        if self.g_steps < 1 or self.d_steps < 0:
            raise ConfigError("need at least one generator step per iteration")


class ResidualBlock(nn.Module):
    def __init__(self, channels, name, rng):
        self.c1 = nn.Conv2d(channels, channels, 3, f"{name}.c1", rng, padding=1)
        self.c2 = nn.Conv2d(channels, channels, 3, f"{name}.c2", rng, padding=1)

    def forward(self, x):
        h = self.c1(x).relu()
        return self.c2(h) + x


class Generator(nn.Module):
    """Fully convolutional encoder / residual trunk / decoder.

    Computes a residual in logit space: out = sigmoid(logit(x) + delta(x)),
    so the output range stays in (0,1) and the map is exactly the identity
    when the delta head is zero. At init the head is drawn with a logit-rms
    of roughly head_init_std, bounding the mean output deviation by about
    head_init_std / 4 (sigmoid slope); small std values give a near-identity
    start, while the default leaves the cycle loss visible headroom to descend.
    """

    def __init__(self, direction: str, cfg: CycleGanConfig, rng):
        c = cfg.base_channels
        p = f"gen_{direction}"
        self.direction = direction
        self.stem = nn.Conv2d(3, c, 3, f"{p}.stem", rng, padding=1)
        self.down = nn.Conv2d(c, 2 * c, 3, f"{p}.down", rng, stride=2, padding=1)
        self.blocks = [
            ResidualBlock(2 * c, f"{p}.res{i}", rng) for i in range(cfg.res_blocks)
        ]
        self.up = nn.Conv2d(2 * c, c, 3, f"{p}.up", rng, padding=1)
        # weight std scaled by fan-in so the initial logit delta is ~head_init_std
        self.head = nn.Conv2d(c, 3, 3, f"{p}.head", rng, padding=1,
                              init_scale=cfg.head_init_std / np.sqrt(9.0 * c))

    def forward(self, x: Tensor) -> Tensor:
        h = self.stem(x).relu()
        h = self.down(h).relu()
        for blk in self.blocks:
            h = blk(h)
        h = self.up(ad.upsample2x(h)).relu()
        delta = self.head(h)
        return (x.logit() + delta).sigmoid()


class Discriminator(nn.Module):
    """Conv stack to a single per-image score in (0,1)."""

    def __init__(self, domain: str, cfg: CycleGanConfig, rng):
        c1, c2 = cfg.disc_channels
        h, w = cfg.image_size
        p = f"disc_{domain}"
        self.domain = domain
        self.conv1 = nn.Conv2d(3, c1, 3, f"{p}.conv1", rng, stride=2, padding=1)
        self.conv2 = nn.Conv2d(c1, c2, 3, f"{p}.conv2", rng, stride=2, padding=1)
        self.fc = nn.Linear(c2 * (h // 4) * (w // 4), 1, f"{p}.fc", rng)

    def forward(self, x: Tensor) -> Tensor:
        n = x.data.shape[0]
        h = self.conv1(x).relu()
        h = self.conv2(h).relu()
        return self.fc(h.reshape(n, -1)).sigmoid()


@dataclass
class CycleGanNets:
    g_ab: Generator  # sim -> pseudo-real
    g_ba: Generator
    d_a: Discriminator
    d_b: Discriminator

    def generator_params(self):
        return self.g_ab.parameters() + self.g_ba.parameters()

    def discriminator_params(self):
        return self.d_a.parameters() + self.d_b.parameters()

    def all_params(self):
        return self.generator_params() + self.discriminator_params()


def build_nets(cfg: CycleGanConfig) -> CycleGanNets:
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xC6A2]))
    nets = CycleGanNets(
        Generator("ab", cfg, rng),
        Generator("ba", cfg, rng),
        Discriminator("a", cfg, rng),
        Discriminator("b", cfg, rng),
    )
    nn.check_unique_names(nets.all_params())
    return nets


@dataclass
class TrainState:
    """Iteration counter, append-only loss history, and the sampling RNG."""

    iteration: int = 0
    history: dict = field(default_factory=lambda: {
        "gan_ab": [], "gan_ba": [], "cycle": [], "total": []})
    rng: np.random.Generator = None

    @staticmethod
    def fresh(seed: int) -> "TrainState":
        return TrainState(rng=np.random.default_rng(np.random.SeedSequence([seed, 0x5EED])))


def _check_batch(batch: Tensor) -> None:
    if batch.data.ndim != 4 or batch.data.shape[1] != 3:
        raise ShapeError(f"image batches must be NCHW with 3 channels, got {batch.data.shape}")
    if batch.data.shape[0] == 0:
        raise ShapeError("image batch is empty")


def gan_value(gen: Generator, disc: Discriminator, batch_src: Tensor,
              batch_dst: Tensor, fake_dst: Tensor | None = None) -> Tensor:
    """Adversarial value E[log D(real)] + E[log(1 - D(G(src)))]; <= 0.

    Expectations are batch means. Pass fake_dst to reuse (or detach) the
    generated batch; otherwise the generator runs inside this call.
    """
    _check_batch(batch_src)
    _check_batch(batch_dst)
    if batch_src.data.shape[2:] != batch_dst.data.shape[2:]:
        raise ShapeError("the two domains must share an image shape")
    if fake_dst is None:
        fake_dst = gen(batch_src)
    real_term = disc(batch_dst).log().mean()
    fake_term = (1.0 - disc(fake_dst)).log().mean()
    return real_term + fake_term


def gan_loss(gen: Generator, disc: Discriminator, batch_src, batch_dst) -> float:
    """Eq-value of the adversarial game on one batch pair (reporting helper)."""
    return gan_value(gen, disc, _lift_batch(batch_src), _lift_batch(batch_dst)).item()


def cycle_value(g_ab: Generator, g_ba: Generator, batch_a: Tensor,
                batch_b: Tensor) -> Tensor:
    """Mean-L1 reconstruction error around both loops; >= 0."""
    _check_batch(batch_a)
    _check_batch(batch_b)
    rec_a = g_ba(g_ab(batch_a))
    rec_b = g_ab(g_ba(batch_b))
    return ad.l1_mean(rec_a, batch_a) + ad.l1_mean(rec_b, batch_b)


def cycle_loss(g_ab: Generator, g_ba: Generator, batch_a, batch_b) -> float:
    return cycle_value(g_ab, g_ba, _lift_batch(batch_a), _lift_batch(batch_b)).item()


def total_loss(nets: CycleGanNets, batch_a, batch_b, cycle_weight: float):
    """Weighted objective plus its components: total = w*cycle + gan_ab + gan_ba."""
    batch_a = _lift_batch(batch_a)
    batch_b = _lift_batch(batch_b)
    fake_b = nets.g_ab(batch_a)
    fake_a = nets.g_ba(batch_b)
    rec_a = nets.g_ba(fake_b)
    rec_b = nets.g_ab(fake_a)
    cyc = ad.l1_mean(rec_a, batch_a) + ad.l1_mean(rec_b, batch_b)
    v_ab = (nets.d_b(batch_b).log().mean() + (1.0 - nets.d_b(fake_b)).log().mean())
    v_ba = (nets.d_a(batch_a).log().mean() + (1.0 - nets.d_a(fake_a)).log().mean())
    total = cycle_weight * cyc + v_ab + v_ba
    components = {
        "cycle": cyc.item(),
        "gan_ab": v_ab.item(),
        "gan_ba": v_ba.item(),
        "total": total.item(),
    }
    return total, components


def _lift_batch(batch) -> Tensor:
    if isinstance(batch, Tensor):
        return batch
    return Tensor(np.asarray(batch, dtype=np.float64), validate=False)


def _sample(rng, data: np.ndarray, batch_size: int) -> Tensor:
    idx = rng.integers(0, data.shape[0], size=batch_size)
    return Tensor(data[idx], validate=False)


def train_step(state: TrainState, nets: CycleGanNets, opt_g, opt_d,
               data_a: np.ndarray, data_b: np.ndarray, cfg: CycleGanConfig) -> None:
    """One alternating update: discriminators ascend, then generators descend."""
    batch_a = _sample(state.rng, data_a, cfg.batch_size)
    batch_b = _sample(state.rng, data_b, cfg.batch_size)

    for _ in range(cfg.d_steps):
        fake_b = nets.g_ab(batch_a).detach()
        fake_a = nets.g_ba(batch_b).detach()
        v_ab = gan_value(nets.g_ab, nets.d_b, batch_a, batch_b, fake_dst=fake_b)
        v_ba = gan_value(nets.g_ba, nets.d_a, batch_b, batch_a, fake_dst=fake_a)
        d_loss = -(v_ab + v_ba)  # ascend the adversarial value
        for p in nets.discriminator_params():
            p.tensor.zero_grad()
        ad.backward(d_loss)
        opt_d.step()

    for _ in range(cfg.g_steps):
        total, components = total_loss(nets, batch_a, batch_b, cfg.cycle_weight)
        for p in nets.all_params():
            p.tensor.zero_grad()
        ad.backward(total)
        opt_g.step()  # generator parameters only; discriminators frozen here

    if not np.isfinite(components["total"]):
        raise NumericError(f"training diverged at iteration {state.iteration}")
    for key, value in components.items():
        state.history[key].append(value)
    state.iteration += 1


def train_cyclegan(data_a: np.ndarray, data_b: np.ndarray, cfg: CycleGanConfig,
                   nets: CycleGanNets | None = None):
    """Full training run on two unpaired NCHW image arrays; returns (nets, state)."""
    if nets is None:
        nets = build_nets(cfg)
    state = TrainState.fresh(cfg.seed)
    opt_g = _make_opt(cfg, nets.generator_params())
    opt_d = _make_opt(cfg, nets.discriminator_params())
    for _ in range(cfg.iterations):
        train_step(state, nets, opt_g, opt_d, data_a, data_b, cfg)
    return nets, state


def _make_opt(cfg: CycleGanConfig, params):
    if cfg.optimizer == "adam":
        return nn.Adam(params, cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2)
    if cfg.optimizer == "sgd":
        return nn.Sgd(params, cfg.lr)
    raise ConfigError(f"unknown optimizer {cfg.optimizer!r}")


def convert_image(gen: Generator, image_hwc: np.ndarray) -> np.ndarray:
    """Apply a frozen generator to one HWC image in [0,1]; pure function."""
    image_hwc = np.asarray(image_hwc, dtype=np.float64)
    if image_hwc.ndim != 3 or image_hwc.shape[2] != 3:
        raise ShapeError(f"expected HWC rgb image, got {image_hwc.shape}")
    x = Tensor(image_hwc.transpose(2, 0, 1)[None], validate=False)
    out = gen(x)
    return out.data[0].transpose(1, 2, 0)


def smoothed(series, window: int = 25) -> np.ndarray:
    """Trailing moving average (partial windows at the start)."""
    series = np.asarray(series, dtype=np.float64)
    if series.size == 0:
        return series
    csum = np.cumsum(series)
    out = np.empty_like(series)
    for i in range(series.size):
        lo = max(0, i - window + 1)
        out[i] = (csum[i] - (csum[lo - 1] if lo > 0 else 0.0)) / (i - lo + 1)
    return out
