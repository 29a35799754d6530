"""Dense float64 tensors with reverse-mode automatic differentiation.

The recorded graph lives on the tensors themselves: each op output keeps
references to its parents and a closure that maps the upstream gradient
to parent gradients. backward() replays the closures once each, in
reverse topological order. Everything runs in float64 on numpy arrays.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import LabelError, ShapeError


class Tensor:
    """A dense array plus an optional gradient accumulator."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def accumulate_grad(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self):
        backward(self)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, scalar):
        return scale(self, scalar)

    __rmul__ = __mul__


def _node(data, parents, backward_fn) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(tensor) into .grad for every tensor reachable
    from the scalar `loss`. Repeated calls keep accumulating: each call
    adds exactly one more d(loss)/d(tensor)."""
    if loss.shape != ():
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    topo = []
    visited = set()
    stack = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    # sweep on a clean slate so gradients retained from earlier passes
    # do not re-propagate, then fold the old values back in
    held = [node.grad for node in topo]
    for node in topo:
        node.grad = None
    loss.accumulate_grad(np.ones(()))
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
    for node, old in zip(topo, held):
        if old is not None:
            node.grad = old if node.grad is None else node.grad + old


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum with numpy broadcasting (covers bias addition)."""
    try:
        data = a.data + b.data
    except ValueError:
        raise ShapeError(f"cannot add shapes {a.shape} and {b.shape}") from None

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g, b.shape))

    return _node(data, [a, b], bwd)


def scale(a: Tensor, factor: float) -> Tensor:
    factor = float(factor)

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(g * factor)

    return _node(a.data * factor, [a], bwd)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """2-D matrix product [n,k] @ [k,m]."""
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shapes {a.shape} and {b.shape} do not chain")

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(g @ b.data.T)
        if b.requires_grad:
            b.accumulate_grad(a.data.T @ g)

    return _node(a.data @ b.data, [a, b], bwd)


def reshape(x: Tensor, shape) -> Tensor:
    try:
        data = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"cannot reshape {x.shape} to {shape}") from None

    def bwd(g):
        if x.requires_grad:
            x.accumulate_grad(np.asarray(g).reshape(x.shape))

    return _node(data, [x], bwd)


def narrow(x: Tensor, start: int, stop: int) -> Tensor:
    """Rows start:stop of a 2-D tensor."""
    if x.ndim != 2:
        raise ShapeError(f"narrow expects a 2-D tensor, got {x.shape}")
    if not 0 <= start <= stop <= x.shape[0]:
        raise ShapeError(f"rows {start}:{stop} out of range for {x.shape}")

    def bwd(g):
        if x.requires_grad:
            full = np.zeros_like(x.data)
            full[start:stop] = g
            x.accumulate_grad(full)

    return _node(x.data[start:stop], [x], bwd)


def relu(x: Tensor) -> Tensor:
    """max(0, x); the subgradient at 0 is taken to be 0."""
    mask = x.data > 0

    def bwd(g):
        if x.requires_grad:
            x.accumulate_grad(g * mask)

    return _node(np.where(mask, x.data, 0.0), [x], bwd)


def conv2d(x: Tensor, w: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation of an NCHW input with an FCHW kernel stack."""
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"conv2d expects 4-D input and kernel, got {x.shape} and {w.shape}")
    n, c, h, width = x.shape
    f, cw, kh, kw = w.shape
    if c != cw:
        raise ShapeError(f"input has {c} channels but kernel expects {cw}")
    stride = int(stride)
    padding = int(padding)
    if stride < 1 or padding < 0:
        raise ShapeError(f"invalid stride {stride} or padding {padding}")
    if h + 2 * padding < kh or width + 2 * padding < kw:
        raise ShapeError(
            f"kernel {kh}x{kw} does not fit padded input {h + 2 * padding}x{width + 2 * padding}"
        )
    hp = (h + 2 * padding - kh) // stride + 1
    wp = (width + 2 * padding - kw) // stride + 1

    if padding:
        xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    else:
        xp = x.data
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    # [n*hp*wp, c*kh*kw] copy so the products below hit BLAS
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(n * hp * wp, c * kh * kw)
    wmat = w.data.reshape(f, c * kh * kw)
    out = (cols @ wmat.T).reshape(n, hp, wp, f).transpose(0, 3, 1, 2)

    def bwd(g):
        gmat = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(n * hp * wp, f)
        if w.requires_grad:
            w.accumulate_grad((gmat.T @ cols).reshape(f, c, kh, kw))
        if x.requires_grad:
            dwin = (gmat @ wmat).reshape(n, hp, wp, c, kh, kw).transpose(0, 3, 1, 2, 4, 5)
            dxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    dxp[:, :, i : i + stride * hp : stride, j : j + stride * wp : stride] += dwin[
                        :, :, :, :, i, j
                    ]
            if padding:
                dxp = dxp[:, :, padding : padding + h, padding : padding + width]
            x.accumulate_grad(dxp)

    return _node(out, [x, w], bwd)


def global_avg_pool(x: Tensor) -> Tensor:
    """Spatial mean per channel: [N,C,H,W] -> [N,C]."""
    if x.ndim != 4:
        raise ShapeError(f"global_avg_pool expects 4-D input, got {x.shape}")
    n, c, h, w = x.shape
    if h < 1 or w < 1:
        raise ShapeError("empty spatial extent")
    area = h * w

    def bwd(g):
        if x.requires_grad:
            x.accumulate_grad(np.broadcast_to((g / area)[:, :, None, None], x.shape))

    return _node(x.data.mean(axis=(2, 3)), [x], bwd)


def dropout(x: Tensor, rate: float, training: bool, rng: np.random.Generator) -> Tensor:
    """Inverted dropout: zero with probability `rate` and rescale survivors
    by 1/(1-rate) at training time; identity in eval mode."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    keep = rng.random(x.shape) >= rate
    factor = 1.0 / (1.0 - rate)

    def bwd(g):
        if x.requires_grad:
            x.accumulate_grad(g * keep * factor)

    return _node(x.data * keep * factor, [x], bwd)


def segment_mean(x: Tensor, k: int) -> Tensor:
    """Mean over groups of k consecutive rows: [n*k, c] -> [n, c]."""
    if x.ndim != 2:
        raise ShapeError(f"segment_mean expects 2-D logits, got {x.shape}")
    n, c = x.shape
    if k < 1 or n % k != 0:
        raise ShapeError(f"{n} rows are not a multiple of segment count {k}")

    def bwd(g):
        if x.requires_grad:
            x.accumulate_grad(np.repeat(g / k, k, axis=0))

    return _node(x.data.reshape(n // k, k, c).mean(axis=1), [x], bwd)


def softmax_cross_entropy(logits: Tensor, labels) -> tuple[Tensor, Tensor]:
    """Mean cross-entropy over rows plus the row-wise softmax.

    Numerically stable (log-sum-exp); the gradient of the loss w.r.t. the
    logits is (probs - onehot) / n.
    """
    if logits.ndim != 2:
        raise ShapeError(f"logits must be 2-D, got {logits.shape}")
    n, k = logits.shape
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (n,):
        raise LabelError(f"expected {n} labels, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise LabelError(f"labels must lie in [0, {k})")
    z = logits.data
    zmax = z.max(axis=1, keepdims=True)
    ez = np.exp(z - zmax)
    denom = ez.sum(axis=1, keepdims=True)
    probs = ez / denom
    logp = (z - zmax) - np.log(denom)
    loss_value = -logp[np.arange(n), labels].mean()

    def bwd(g):
        if logits.requires_grad:
            delta = probs.copy()
            delta[np.arange(n), labels] -= 1.0
            logits.accumulate_grad(g * delta / n)

    return _node(loss_value, [logits], bwd), Tensor(probs)
