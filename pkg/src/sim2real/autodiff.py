"""Reverse-mode automatic differentiation on numpy float64 arrays.

A Tensor wraps an ndarray and remembers how it was produced; backward()
topologically orders the recorded operations (the tape) and accumulates
gradients once per node. Only the operations the image-translation and
task networks need are provided: elementwise arithmetic with numpy
broadcasting, matmul, conv2d/maxpool2d/upsample, the usual activations,
and the loss heads.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError, NumericError, ShapeError

EPS_PROB = 1e-7  # probability clamp for log losses; keeps saturated sigmoids finite


def _as_f64(data) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    return arr


class Tensor:
    """n-dimensional float64 value with an optional gradient."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, validate: bool = True):
        self.data = _as_f64(data)
        if validate and not np.all(np.isfinite(self.data)):
            raise NumericError("tensor contains non-finite entries")
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

    @staticmethod
    def _from_op(data, parents, backward_fn) -> "Tensor":
        out = Tensor.__new__(Tensor)
        out.data = data
        out.grad = None
        out.requires_grad = any(p.requires_grad for p in parents)
        if out.requires_grad:
            out._parents = tuple(parents)
            out._backward = backward_fn
        else:
            out._parents = ()
            out._backward = None
        return out

    # -- bookkeeping ---------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(()))

    def accumulate_grad(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def detach(self) -> "Tensor":
        """Value copy severed from the tape; gradients stop here."""
        return Tensor(self.data, requires_grad=False, validate=False)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={'set' if self.grad is not None else 'none'})"

    # -- elementwise arithmetic (numpy broadcasting, summed back) ------

    def __add__(self, other):
        other = _lift(other)
        out_data = self.data + other.data

        def bw(g):
            if self.requires_grad:
                self.accumulate_grad(_unbroadcast(g, self.data.shape))
            if other.requires_grad:
                other.accumulate_grad(_unbroadcast(g, other.data.shape))

        return Tensor._from_op(out_data, (self, other), bw)

    __radd__ = __add__

    def __neg__(self):
        def bw(g):
            if self.requires_grad:
                self.accumulate_grad(-g)

        return Tensor._from_op(-self.data, (self,), bw)

    def __sub__(self, other):
        return self + (-_lift(other))

    def __rsub__(self, other):
        return _lift(other) + (-self)

    def __mul__(self, other):
        other = _lift(other)
        out_data = self.data * other.data

        def bw(g):
            if self.requires_grad:
                self.accumulate_grad(_unbroadcast(g * other.data, self.data.shape))
            if other.requires_grad:
                other.accumulate_grad(_unbroadcast(g * self.data, other.data.shape))

        return Tensor._from_op(out_data, (self, other), bw)

    __rmul__ = __mul__

    def matmul(self, other: "Tensor") -> "Tensor":
        other = _lift(other)
        out_data = np.matmul(self.data, other.data)

        def bw(g):
            if self.requires_grad:
                ga = np.matmul(g, np.swapaxes(other.data, -1, -2))
                self.accumulate_grad(_unbroadcast(ga, self.data.shape))
            if other.requires_grad:
                gb = np.matmul(np.swapaxes(self.data, -1, -2), g)
                other.accumulate_grad(_unbroadcast(gb, other.data.shape))

        return Tensor._from_op(out_data, (self, other), bw)

    __matmul__ = matmul

    # -- activations ----------------------------------------------------

    def relu(self) -> "Tensor":
        out_data = np.maximum(self.data, 0.0)

        def bw(g):
            if self.requires_grad:
                self.accumulate_grad(g * (self.data > 0.0))  # subgradient 0 at the kink

        return Tensor._from_op(out_data, (self,), bw)

    def tanh(self) -> "Tensor":
        out_data = np.tanh(self.data)

        def bw(g):
            if self.requires_grad:
                self.accumulate_grad(g * (1.0 - out_data * out_data))

        return Tensor._from_op(out_data, (self,), bw)

    def sigmoid(self) -> "Tensor":
        out_data = _sigmoid(self.data)

        def bw(g):
            if self.requires_grad:
                self.accumulate_grad(g * out_data * (1.0 - out_data))

        return Tensor._from_op(out_data, (self,), bw)

    def log(self, eps: float = EPS_PROB) -> "Tensor":
        """Natural log with the argument clamped below at eps."""
        clamped = np.maximum(self.data, eps)
        out_data = np.log(clamped)

        def bw(g):
            if self.requires_grad:
                self.accumulate_grad(g / clamped)

        return Tensor._from_op(out_data, (self,), bw)

    def logit(self, eps: float = EPS_PROB) -> "Tensor":
        """Inverse sigmoid of values in (0, 1), clamped to [eps, 1-eps]."""
        clamped = np.clip(self.data, eps, 1.0 - eps)
        out_data = np.log(clamped) - np.log1p(-clamped)

        def bw(g):
            if self.requires_grad:
                self.accumulate_grad(g / (clamped * (1.0 - clamped)))

        return Tensor._from_op(out_data, (self,), bw)

    def abs(self) -> "Tensor":
        out_data = np.abs(self.data)

        def bw(g):
            if self.requires_grad:
                self.accumulate_grad(g * np.sign(self.data))

        return Tensor._from_op(out_data, (self,), bw)

    # -- reductions / shape ops ------------------------------------------

    def sum(self) -> "Tensor":
        out_data = np.asarray(self.data.sum())

        def bw(g):
            if self.requires_grad:
                self.accumulate_grad(np.broadcast_to(g, self.data.shape).copy())

        return Tensor._from_op(out_data, (self,), bw)

    def mean(self) -> "Tensor":
        n = self.data.size
        out_data = np.asarray(self.data.mean())

        def bw(g):
            if self.requires_grad:
                self.accumulate_grad(np.broadcast_to(g / n, self.data.shape).copy())

        return Tensor._from_op(out_data, (self,), bw)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        out_data = self.data.reshape(shape)

        def bw(g):
            if self.requires_grad:
                self.accumulate_grad(g.reshape(self.data.shape))

        return Tensor._from_op(out_data, (self,), bw)


def _lift(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x, validate=False)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum g down to `shape`, inverting numpy broadcasting."""
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, extent in enumerate(shape):
        if extent == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [_lift(t) for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    offsets = np.cumsum([0] + [t.data.shape[axis] for t in tensors])

    def bw(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                t.accumulate_grad(g[tuple(idx)])

    return Tensor._from_op(out_data, tuple(tensors), bw)


# -- structured ops ------------------------------------------------------


def conv2d(x: Tensor, w: Tensor, b: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """2-D convolution on NCHW input with an FCHW kernel (cross-correlation)."""
    n, c, h, ww = x.data.shape
    f, cw, kh, kw = w.data.shape
    if cw != c:
        raise ShapeError(f"conv2d: input has {c} channels, kernel expects {cw}")
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (ww + 2 * padding - kw) // stride + 1
    if oh <= 0 or ow <= 0:
        raise ShapeError(f"conv2d: kernel {kh}x{kw} does not fit input {h}x{ww}")

    xp = x.data
    if padding:
        xp = np.pad(xp, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    cols = np.empty((n, c, kh, kw, oh * ow), dtype=np.float64)
    for i in range(kh):
        for j in range(kw):
            patch = xp[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride]
            cols[:, :, i, j, :] = patch.reshape(n, c, oh * ow)
    cols2 = cols.reshape(n, c * kh * kw, oh * ow)
    w2 = w.data.reshape(f, c * kh * kw)
    out_data = (np.matmul(w2[None], cols2) + b.data[None, :, None]).reshape(n, f, oh, ow)

    def bw(g):
        g2 = g.reshape(n, f, oh * ow)
        if w.requires_grad:
            dw = np.matmul(g2, cols2.transpose(0, 2, 1)).sum(axis=0)
            w.accumulate_grad(dw.reshape(f, c, kh, kw))
        if b.requires_grad:
            b.accumulate_grad(g2.sum(axis=(0, 2)))
        if x.requires_grad:
            dcols = np.matmul(w2.T[None], g2).reshape(n, c, kh, kw, oh * ow)
            dxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    dxp[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride] += (
                        dcols[:, :, i, j, :].reshape(n, c, oh, ow)
                    )
            if padding:
                dxp = dxp[:, :, padding:-padding, padding:-padding]
            x.accumulate_grad(dxp)

    return Tensor._from_op(out_data, (x, w, b), bw)


def maxpool2d(x: Tensor, k: int = 2) -> Tensor:
    """Non-overlapping k-by-k max pooling (stride = k); extents must divide."""
    n, c, h, w = x.data.shape
    if h % k or w % k:
        raise ShapeError(f"maxpool2d: {h}x{w} not divisible by window {k}")
    oh, ow = h // k, w // k
    xr = (
        x.data.reshape(n, c, oh, k, ow, k)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(n, c, oh, ow, k * k)
    )
    am = xr.argmax(axis=-1)  # first max wins ties
    out_data = np.take_along_axis(xr, am[..., None], axis=-1)[..., 0]

    def bw(g):
        if x.requires_grad:
            dxr = np.zeros_like(xr)
            np.put_along_axis(dxr, am[..., None], g[..., None], axis=-1)
            dx = (
                dxr.reshape(n, c, oh, ow, k, k)
                .transpose(0, 1, 2, 4, 3, 5)
                .reshape(n, c, h, w)
            )
            x.accumulate_grad(dx)

    return Tensor._from_op(out_data, (x,), bw)


def upsample2x(x: Tensor) -> Tensor:
    """Nearest-neighbor 2x spatial upsampling of NCHW input."""
    out_data = x.data.repeat(2, axis=2).repeat(2, axis=3)
    n, c, h, w = x.data.shape

    def bw(g):
        if x.requires_grad:
            x.accumulate_grad(g.reshape(n, c, h, 2, w, 2).sum(axis=(3, 5)))

    return Tensor._from_op(out_data, (x,), bw)


def softmax_cross_entropy(logits: Tensor, target_ids: np.ndarray) -> Tensor:
    """Mean per-position multiclass cross entropy; classes on axis 1."""
    z = logits.data
    target_ids = np.asarray(target_ids)
    if target_ids.shape != z.shape[:1] + z.shape[2:]:
        raise ShapeError(
            f"softmax_cross_entropy: targets {target_ids.shape} do not match logits {z.shape}"
        )
    zmax = z.max(axis=1, keepdims=True)
    ez = np.exp(z - zmax)
    sez = ez.sum(axis=1, keepdims=True)
    logp = (z - zmax) - np.log(sez)
    picked = np.take_along_axis(logp, np.expand_dims(target_ids, 1), axis=1)
    count = picked.size
    out_data = np.asarray(-picked.sum() / count)

    def bw(g):
        if logits.requires_grad:
            p = ez / sez
            p[_onehot_index(target_ids, z.ndim)] -= 1.0  # positions are unique
            logits.accumulate_grad(p * (g / count))

    return Tensor._from_op(out_data, (logits,), bw)


def _onehot_index(target_ids, ndim):
    n = target_ids.shape[0]
    if ndim == 2:
        return (np.arange(n), target_ids)
    nn, hh, ww = target_ids.shape
    ii, jj, kk = np.meshgrid(np.arange(nn), np.arange(hh), np.arange(ww), indexing="ij")
    return (ii, target_ids, jj, kk)


# -- losses ----------------------------------------------------------------


def l1_mean(pred: Tensor, target: Tensor) -> Tensor:
    """Mean absolute per-element difference."""
    target = _lift(target)
    if pred.data.shape != target.data.shape:
        raise ShapeError(f"l1_mean: {pred.data.shape} vs {target.data.shape}")
    return (pred - target).abs().mean()


def bce_mean(pred: Tensor, target: Tensor, eps: float = EPS_PROB) -> Tensor:
    """Mean binary cross entropy with probabilities clamped to [eps, 1-eps].

    The gradient uses the clamped probability, so saturated predictions
    keep a finite, restoring gradient instead of a dead zero.
    """
    target = _lift(target)
    if pred.data.shape != target.data.shape:
        raise ShapeError(f"bce: {pred.data.shape} vs {target.data.shape}")
    y = target.data
    if not np.all((y == 0.0) | (y == 1.0)):
        raise ContractError("bce: targets must be binary")
    pc = np.clip(pred.data, eps, 1.0 - eps)
    n = pc.size
    out_data = np.asarray(-(y * np.log(pc) + (1.0 - y) * np.log1p(-pc)).sum() / n)

    def bw(g):
        if pred.requires_grad:
            pred.accumulate_grad(g * (pc - y) / (pc * (1.0 - pc)) / n)

    return Tensor._from_op(out_data, (pred, target), bw)


LOSS_KINDS = ("l1_mean", "bce", "log_multilabel")


def loss_forward(kind: str, prediction: Tensor, target) -> Tensor:
    """Dispatch a named loss; log_multilabel is elementwise BCE over the label vector."""
    if kind == "l1_mean":
        return l1_mean(prediction, _lift(target))
    if kind in ("bce", "log_multilabel"):
        return bce_mean(prediction, _lift(target))
    raise ContractError(f"unknown loss kind {kind!r}; expected one of {LOSS_KINDS}")


# -- the tape and backward pass --------------------------------------------


class Tape:
    """Topologically ordered record of the operations reachable from a root."""

    __slots__ = ("nodes",)

    def __init__(self, nodes):
        self.nodes = nodes

    @staticmethod
    def from_root(root: Tensor) -> "Tape":
        nodes = []
        visited = set()
        stack = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                nodes.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))
        return Tape(nodes)


def backward(loss: Tensor) -> None:
    """Populate .grad on every tensor the scalar loss depends on."""
    if loss.data.size != 1:
        raise ContractError(f"backward expects a scalar loss, got shape {loss.data.shape}")
    tape = Tape.from_root(loss)
    loss.accumulate_grad(np.ones_like(loss.data))
    for node in reversed(tape.nodes):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
