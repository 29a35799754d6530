"""Central finite-difference checks for every differentiable operation and
for the full two-head network. All math in float64; the suite threshold is
1e-4 relative error, with tighter expectations on the simple ops."""

from __future__ import annotations

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .network import TrunkSpec, build_network, forward_loss, MixedBatch
from .seeding import substream


def numeric_grad(f, x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """d f / d x by central differences, one coordinate at a time.

    Perturbs `x` in place (restoring it afterwards), so f may either use
    the passed array or read the same buffer through another reference.
    """
    x = np.asarray(x)
    if x.dtype != np.float64:
        raise TypeError(f"numeric_grad needs float64 arrays, got {x.dtype}")
    grad = np.zeros_like(x)
    flat = x.ravel()
    gflat = grad.ravel()
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + eps
        hi = f(x)
        flat[i] = keep - eps
        lo = f(x)
        flat[i] = keep
        gflat[i] = (hi - lo) / (2.0 * eps)
    return grad


def rel_error(a: np.ndarray, n: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64).ravel()
    n = np.asarray(n, dtype=np.float64).ravel()
    denom = max(np.linalg.norm(a) + np.linalg.norm(n), 1e-12)
    return float(np.linalg.norm(a - n) / denom)


def _check(build_loss, arrays, eps=1e-6) -> float:
    """Max relative error over the gradients of `arrays`.

    build_loss(tensors) must rebuild the graph from the given tensors so
    the numeric probe sees the same function the backward pass saw.
    """
    tensors = [Tensor(a, requires_grad=True) for a in arrays]
    loss = build_loss(tensors)
    ag.backward(loss)
    worst = 0.0
    for idx, t in enumerate(tensors):
        def f(x, idx=idx):
            probe = [Tensor(a) for a in arrays]
            probe[idx] = Tensor(x)
            return float(build_loss(probe).data)

        worst = max(worst, rel_error(t.grad, numeric_grad(f, arrays[idx], eps)))
    return worst


def _weighted_sum(t: Tensor, w: np.ndarray) -> Tensor:
    """Scalar probe loss: a fixed random projection of a 2-D output.

    The fixed weights keep the probe sensitive to every coordinate (an
    unweighted sum can hide sign errors that cancel)."""
    col = Tensor(w.reshape(-1, 1))
    out = ag.matmul(t, col)  # [n, 1]
    ones = Tensor(np.ones((1, out.shape[0])))
    return ag.reshape(ag.matmul(ones, out), ())


def run_suite(seed: int = 0) -> list:
    """[(name, max_rel_err), ...] for every differentiable op plus the
    full trunk+two-head network."""
    rng = substream(seed, "gradcheck")
    results = []

    a = rng.standard_normal((4, 3))
    b = rng.standard_normal((3, 5))
    w = rng.standard_normal(5)
    results.append((
        "matmul",
        _check(lambda ts: _weighted_sum(ag.matmul(ts[0], ts[1]), w), [a, b]),
    ))

    x = rng.standard_normal((4, 3))
    y = rng.standard_normal((4, 3))
    wxy = rng.standard_normal(3)
    results.append((
        "add",
        _check(lambda ts: _weighted_sum(ag.add(ts[0], ts[1]), wxy), [x, y]),
    ))
    bias = rng.standard_normal(3)
    results.append((
        "add_broadcast",
        _check(lambda ts: _weighted_sum(ag.add(ts[0], ts[1]), wxy), [x, bias]),
    ))

    results.append((
        "scale",
        _check(lambda ts: _weighted_sum(ag.scale(ts[0], -1.7), wxy), [x]),
    ))

    # keep relu inputs away from the kink at 0
    xr = rng.standard_normal((4, 3))
    xr = np.where(np.abs(xr) < 0.1, 0.5, xr)
    results.append((
        "relu",
        _check(lambda ts: _weighted_sum(ag.relu(ts[0]), wxy), [xr]),
    ))

    def conv_case(name, n, c, h, wdt, f, kh, kw, stride, padding):
        xc = rng.standard_normal((n, c, h, wdt))
        kc = rng.standard_normal((f, c, kh, kw))
        hp = (h + 2 * padding - kh) // stride + 1
        wp = (wdt + 2 * padding - kw) // stride + 1
        wout = rng.standard_normal(f * hp * wp)

        def loss(ts):
            out = ag.conv2d(ts[0], ts[1], stride=stride, padding=padding)
            flat = _reshape_rows(out)
            return _weighted_sum(flat, wout)

        results.append((name, _check(loss, [xc, kc])))

    conv_case("conv2d", 2, 3, 5, 5, 4, 3, 3, 1, 0)
    conv_case("conv2d_same_pad", 2, 2, 6, 6, 3, 3, 3, 1, 1)
    conv_case("conv2d_stride2", 1, 2, 7, 7, 2, 3, 3, 2, 0)

    xg = rng.standard_normal((3, 4, 5, 6))
    wg = rng.standard_normal(4)
    results.append((
        "global_avg_pool",
        _check(lambda ts: _weighted_sum(ag.global_avg_pool(ts[0]), wg), [xg]),
    ))

    xs = rng.standard_normal((6, 4))
    ws = rng.standard_normal(4)
    results.append((
        "segment_mean",
        _check(lambda ts: _weighted_sum(ag.segment_mean(ts[0], 3), ws), [xs]),
    ))

    xd = rng.standard_normal((5, 4))
    wd = rng.standard_normal(4)

    def dropout_loss(ts):
        # a fresh but identically seeded generator keeps the mask fixed
        # across the numeric probes, so the function stays differentiable
        out = ag.dropout(ts[0], 0.25, True, substream(seed, "gradcheck/mask"))
        return _weighted_sum(out, wd)

    results.append(("dropout", _check(dropout_loss, [xd])))

    xn = rng.standard_normal((7, 4))
    wn = rng.standard_normal(4)
    results.append((
        "narrow",
        _check(lambda ts: _weighted_sum(ag.narrow(ts[0], 2, 6), wn), [xn]),
    ))

    logits = rng.standard_normal((5, 4))
    labels = rng.integers(0, 4, size=5)
    results.append((
        "softmax_cross_entropy",
        _check(lambda ts: ag.softmax_cross_entropy(ts[0], labels)[0], [logits]),
    ))

    results.append(("network", _network_check(seed)))
    return results


def _reshape_rows(t: Tensor) -> Tensor:
    """Flatten [N, ...] -> [N, prod] inside the graph."""
    return ag.reshape(t, (t.shape[0], -1))


def _network_check(seed: int) -> float:
    """Finite differences through the full mixed-batch loss for every
    network parameter."""
    rng = substream(seed, "gradcheck/net")
    spec = TrunkSpec(in_channels=1, channels=(2, 3), fc_width=5)
    net = build_network(3, 4, spec, rng, dropout_rate=0.25)
    k = 2
    n_act, n_obj = 4, 3
    inputs = rng.standard_normal((n_act + n_obj, 1, 6, 6))
    act_labels = [1, 1, 2, 2]  # two videos of two frames
    obj_labels = [0, 3, 2]
    samples = [(inputs[i], act_labels[i], "activity") for i in range(n_act)]
    samples += [(inputs[n_act + j], obj_labels[j], "object") for j in range(n_obj)]
    batch = MixedBatch(samples, n_act, n_obj, k)

    def loss_value() -> float:
        total, _, _ = forward_loss(net, batch, True,
                                   substream(seed, "gradcheck/netmask"))
        return total

    total = loss_value()
    ag.backward(total)
    grads = {name: p.grad.copy() for name, p in net.params.items()}
    worst = 0.0
    for name, p in net.params.items():
        num = numeric_grad(
            lambda _, p=p: float(loss_value().data), p.data, eps=1e-6
        )
        worst = max(worst, rel_error(grads[name], num))
        p.grad = None
    return worst


def suite_passed(results, threshold: float = 1e-4) -> bool:
    return all(err < threshold for _, err in results)
