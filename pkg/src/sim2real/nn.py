"""Parameterized layers, optimizers, the finite-difference gradient check,
and the binary weight-file format."""

from __future__ import annotations

import struct

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, ContractError, NumericError, ShapeError, ValidationError


class Parameter:
    """Named trainable tensor with an optional L2 weight-decay coefficient."""

    __slots__ = ("name", "tensor", "weight_decay")

    def __init__(self, name: str, data, weight_decay: float = 0.0):
        if weight_decay < 0:
            raise ConfigError(f"weight_decay must be >= 0, got {weight_decay}")
        self.name = name
        arr = np.ascontiguousarray(np.asarray(data, dtype=np.float64))
        self.tensor = Tensor(arr, requires_grad=True)
        self.weight_decay = float(weight_decay)

    @property
    def data(self) -> np.ndarray:
        return self.tensor.data

    @property
    def grad(self):
        return self.tensor.grad

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.data.shape})"


class Module:
    """Base for anything with parameters and a forward pass."""

    def parameters(self) -> list[Parameter]:
        found = []
        for v in vars(self).values():
            if isinstance(v, Parameter):
                found.append(v)
            elif isinstance(v, Module):
                found.extend(v.parameters())
            elif isinstance(v, (list, tuple)):
                for item in v:
                    if isinstance(item, Module):
                        found.extend(item.parameters())
                    elif isinstance(item, Parameter):
                        found.append(item)
        return found

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.tensor.zero_grad()

    def forward(self, *args):
        raise NotImplementedError

    def __call__(self, *args):
        return self.forward(*args)


def check_unique_names(params) -> None:
    names = [p.name for p in params]
    if len(set(names)) != len(names):
        dupes = sorted({n for n in names if names.count(n) > 1})
        raise ConfigError(f"duplicate parameter names: {dupes}")


class Linear(Module):
    def __init__(self, n_in, n_out, name, rng, weight_decay=0.0):
        scale = np.sqrt(2.0 / n_in)
        self.w = Parameter(f"{name}.w", rng.normal(0.0, scale, (n_in, n_out)), weight_decay)
        self.b = Parameter(f"{name}.b", np.zeros(n_out))

    def forward(self, x: Tensor) -> Tensor:
        if x.data.ndim != 2 or x.data.shape[1] != self.w.data.shape[0]:
            raise ShapeError(
                f"linear expects (batch, {self.w.data.shape[0]}), got {x.data.shape}"
            )
        return x.matmul(self.w.tensor) + self.b.tensor


class Conv2d(Module):
    def __init__(self, c_in, c_out, k, name, rng, stride=1, padding=0, weight_decay=0.0,
                 init_scale=None):
        scale = init_scale if init_scale is not None else np.sqrt(2.0 / (c_in * k * k))
        self.w = Parameter(
            f"{name}.w", rng.normal(0.0, scale, (c_out, c_in, k, k)), weight_decay
        )
        self.b = Parameter(f"{name}.b", np.zeros(c_out))
        self.stride = stride
        self.padding = padding

    def forward(self, x: Tensor) -> Tensor:
        if x.data.ndim != 4:
            raise ShapeError(f"conv2d expects NCHW input, got shape {x.data.shape}")
        return ad.conv2d(x, self.w.tensor, self.b.tensor, self.stride, self.padding)


class MaxPool2d(Module):
    def __init__(self, k=2):
        self.k = k

    def forward(self, x: Tensor) -> Tensor:
        return ad.maxpool2d(x, self.k)


class ReLU(Module):
    def forward(self, x):
        return x.relu()


class Tanh(Module):
    def forward(self, x):
        return x.tanh()


class Sigmoid(Module):
    def forward(self, x):
        return x.sigmoid()


class Sequential(Module):
    def __init__(self, *layers):
        self.layers = list(layers)

    def forward(self, x):
        for layer in self.layers:
            x = layer(x)
        return x


LAYER_KINDS = ("linear", "conv2d", "maxpool2d", "relu", "tanh", "sigmoid")


def layer_forward(kind: str, x: Tensor, params=None, config=None) -> Tensor:
    """Single-layer dispatch over the supported layer vocabulary.

    `params` carries (w, b) Parameters for linear/conv2d; `config` is a dict
    with stride/padding for conv2d and window k for maxpool2d.
    """
    config = config or {}
    if not np.all(np.isfinite(x.data)):
        raise NumericError(f"{kind}: non-finite input")
    if kind == "relu":
        return x.relu()
    if kind == "tanh":
        return x.tanh()
    if kind == "sigmoid":
        return x.sigmoid()
    if kind == "maxpool2d":
        return ad.maxpool2d(x, config.get("k", 2))
    if kind == "linear":
        w, b = params
        if x.data.ndim != 2 or x.data.shape[1] != w.data.shape[0]:
            raise ShapeError(f"linear expects (batch, {w.data.shape[0]}), got {x.data.shape}")
        return x.matmul(w.tensor) + b.tensor
    if kind == "conv2d":
        w, b = params
        return ad.conv2d(x, w.tensor, b.tensor, config.get("stride", 1), config.get("padding", 0))
    raise ContractError(f"unknown layer kind {kind!r}; expected one of {LAYER_KINDS}")


# -- optimizers -------------------------------------------------------------


class Sgd:
    """Plain gradient descent; weight decay enters as an L2 gradient term."""

    kind = "sgd"

    def __init__(self, params, lr: float):
        if lr < 0:
            raise ConfigError("lr must be >= 0")
        self.params = list(params)
        self.lr = lr

    def step(self) -> None:
        for p in self.params:
            if p.grad is None:
                raise ContractError(f"parameter {p.name} has no gradient")
            g = p.grad + p.weight_decay * p.data
            p.tensor.data = p.data - self.lr * g


class Adam:
    """Adam with bias correction; first-step magnitude is ~lr per entry."""

    kind = "adam"

    def __init__(self, params, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        if lr < 0:
            raise ConfigError("lr must be >= 0")
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {p.name: np.zeros_like(p.data) for p in self.params}
        self.v = {p.name: np.zeros_like(p.data) for p in self.params}

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for p in self.params:
            if p.grad is None:
                raise ContractError(f"parameter {p.name} has no gradient")
            g = p.grad + p.weight_decay * p.data
            m = self.m[p.name] = b1 * self.m[p.name] + (1 - b1) * g
            v = self.v[p.name] = b2 * self.v[p.name] + (1 - b2) * g * g
            mhat = m / (1 - b1 ** self.t)
            vhat = v / (1 - b2 ** self.t)
            p.tensor.data = p.data - self.lr * mhat / (np.sqrt(vhat) + self.eps)


def make_optimizer(kind: str, params, lr: float, **kwargs):
    if kind == "sgd":
        return Sgd(params, lr)
    if kind == "adam":
        return Adam(params, lr, **kwargs)
    raise ConfigError(f"unknown optimizer kind {kind!r}")


def optimizer_step(kind: str, params, lr: float, state=None):
    """Functional single step; returns the optimizer so state can be threaded."""
    opt = state if state is not None else make_optimizer(kind, params, lr)
    opt.step()
    return opt


# -- gradient verification ---------------------------------------------------


def check_gradients(net, inputs, h: float = 1e-4) -> float:
    """Max relative error between analytic and central-difference gradients.

    The probe loss is the mean of the network output. Every entry of every
    parameter is perturbed by +-h; error is |analytic - numeric| / max(1, |analytic|).
    Reports only; parameters are restored.
    """
    if not (0.0 < h <= 1e-2):
        raise ConfigError(f"h must be in (0, 1e-2], got {h}")
    if isinstance(inputs, Tensor):
        inputs = (inputs,)

    def loss_value() -> float:
        return net(*inputs).mean().item()

    params = net.parameters()
    for p in params:
        p.tensor.zero_grad()
    loss = net(*inputs).mean()
    ad.backward(loss)

    worst = 0.0
    for p in params:
        flat = p.data.reshape(-1)
        gflat = p.grad.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + h
            up = loss_value()
            flat[i] = keep - h
            down = loss_value()
            flat[i] = keep
            numeric = (up - down) / (2.0 * h)
            err = abs(gflat[i] - numeric) / max(1.0, abs(gflat[i]))
            if err > worst:
                worst = err
    return worst


# -- weight serialization -----------------------------------------------------

WEIGHTS_MAGIC = b"GSRT"
WEIGHTS_VERSION = 1


def save_weights(path, params) -> None:
    """Write parameters as little-endian records; round-trips bitwise."""
    params = list(params)
    check_unique_names(params)
    with open(path, "wb") as fh:
        fh.write(WEIGHTS_MAGIC)
        fh.write(struct.pack("<H", WEIGHTS_VERSION))
        fh.write(struct.pack("<I", len(params)))
        for p in params:
            name = p.name.encode("utf-8")
            fh.write(struct.pack("<I", len(name)))
            fh.write(name)
            fh.write(struct.pack("<I", p.data.ndim))
            for extent in p.data.shape:
                fh.write(struct.pack("<I", extent))
            fh.write(np.ascontiguousarray(p.data, dtype="<f8").tobytes())


def load_weights(path) -> dict:
    """Read a weight file back into {name: ndarray}."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != WEIGHTS_MAGIC:
        raise ValidationError(f"{path}: bad magic {blob[:4]!r}")
    (version,) = struct.unpack_from("<H", blob, 4)
    if version != WEIGHTS_VERSION:
        raise ValidationError(f"{path}: unsupported weight format version {version}")
    (count,) = struct.unpack_from("<I", blob, 6)
    off = 10
    out = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<I", blob, off)
        off += 4
        name = blob[off : off + nlen].decode("utf-8")
        off += nlen
        (rank,) = struct.unpack_from("<I", blob, off)
        off += 4
        shape = struct.unpack_from(f"<{rank}I", blob, off)
        off += 4 * rank
        n = int(np.prod(shape)) if rank else 1
        values = np.frombuffer(blob, dtype="<f8", count=n, offset=off).reshape(shape)
        off += 8 * n
        out[name] = values.astype(np.float64)
    if off != len(blob):
        raise ValidationError(f"{path}: {len(blob) - off} trailing bytes")
    return out


def assign_weights(net: Module, weights: dict) -> None:
    """Load a weight dict into a module; names and shapes must match exactly."""
    params = {p.name: p for p in net.parameters()}
    if set(params) != set(weights):
        missing = sorted(set(params) - set(weights))
        extra = sorted(set(weights) - set(params))
        raise ValidationError(f"weight name mismatch: missing={missing} extra={extra}")
    for name, arr in weights.items():
        if params[name].data.shape != arr.shape:
            raise ValidationError(
                f"{name}: shape {arr.shape} does not match parameter {params[name].data.shape}"
            )
        params[name].tensor.data = arr.copy()
