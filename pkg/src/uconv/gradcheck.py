"""Central finite-difference checks for every tape op and a toy CCNN."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from . import tensor as T
from .conv import ContConv, ContConvTranspose, FilterSpec, Learned, StrideSet
from .nn import Mlp, cross_entropy, l1_loss, make_rng, mse_loss
from .tensor import Tensor

__all__ = ["numeric_grad", "rel_error", "check", "op_cases", "run_suite"]

H = 1e-6


def numeric_grad(f: Callable[[], Tensor], x: Tensor, h: float = H) -> np.ndarray:
    """Central differences of scalar ``f()`` w.r.t. every entry of ``x``."""
    g = np.zeros_like(x.data)
    flat = x.data.reshape(-1)
    gflat = g.reshape(-1)
    with T.no_grad():
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            fp = f().item()
            flat[i] = old - h
            fm = f().item()
            flat[i] = old
            gflat[i] = (fp - fm) / (2.0 * h)
    return g


def rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Max-norm relative error, floored so all-zero gradients compare absolutely."""
    scale = max(np.max(np.abs(analytic), initial=0.0), np.max(np.abs(numeric), initial=0.0), 1e-3)
    return float(np.max(np.abs(analytic - numeric), initial=0.0) / scale)


def check(f: Callable[[], Tensor], inputs: Sequence[Tensor], h: float = H) -> float:
    """Largest relative error between tape and finite-difference gradients."""
    for x in inputs:
        x.grad = None
    f().backward()
    worst = 0.0
    for x in inputs:
        analytic = x.grad if x.grad is not None else np.zeros_like(x.data)
        worst = max(worst, rel_error(analytic, numeric_grad(f, x, h)))
    return worst


def _rand(rng, *shape, lo=-1.0, hi=1.0):
    return Tensor(rng.uniform(lo, hi, size=shape), requires_grad=True)


def _toy_cloud(rng, n=5):
    return np.column_stack([rng.uniform(0, 2, n), rng.uniform(0, 1, n)])


def op_cases(seed: int = 0) -> dict[str, tuple[Callable[[], Tensor], list[Tensor]]]:
    """Named scalar-valued closures exercising each op, with their leaf inputs."""
    rng = make_rng(seed)
    cases: dict[str, tuple[Callable[[], Tensor], list[Tensor]]] = {}

    def add(name, f, ins):
        cases[name] = (f, ins)

    w = Tensor(rng.uniform(-1, 1, (3, 4)))  # fixed projection to make outputs non-symmetric

    def proj(x):
        return T.sum(T.mul(x, T.tensor(w.data[: x.shape[0], : x.shape[1]])))

    a, b = _rand(rng, 3, 4), _rand(rng, 4, 2)
    add("matmul", lambda: T.sum(T.square(T.matmul(a, b))), [a, b])
    x, y = _rand(rng, 3, 4), _rand(rng, 3, 4)
    add("add", lambda: T.sum(T.square(T.add(x, y))), [x, y])
    add("sub", lambda: T.sum(T.square(T.sub(x, y))), [x, y])
    add("mul", lambda: T.sum(T.mul(x, y)), [x, y])
    add("neg", lambda: proj(T.neg(x)), [x])
    s = Tensor(np.array(0.7), requires_grad=True)
    add("scale", lambda: T.sum(T.square(T.scale(x, s))), [x, s])
    add("add_scalar", lambda: T.sum(T.square(T.add_scalar(x, 0.3))), [x])
    bias = _rand(rng, 4)
    add("bias_add", lambda: T.sum(T.square(T.bias_add(x, bias))), [x, bias])
    add("sum", lambda: T.sum(T.square(T.sum(x, axis=0))), [x])
    add("mean", lambda: T.sum(T.square(T.mean(x, axis=1))), [x])
    z = _rand(rng, 2, 4)
    add("concat", lambda: T.sum(T.square(T.concat([x, z], axis=0))), [x, z])
    add("stack", lambda: T.sum(T.square(T.stack([x, y], axis=1))), [x, y])
    add("slice", lambda: T.sum(T.square(x[1:, ::2])), [x])
    add("take", lambda: T.sum(T.square(T.take(x, [0, 2, 0], axis=0))), [x])
    add("reshape", lambda: proj(T.reshape(T.square(x), (4, 3)).T), [x])
    add("transpose", lambda: proj(T.transpose(x).T), [x])
    add("abs", lambda: proj(T.abs(x)), [x])
    add("square", lambda: proj(T.square(x)), [x])
    add("exp", lambda: proj(T.exp(x)), [x])
    pos = Tensor(rng.uniform(0.5, 2.0, (3, 4)), requires_grad=True)
    add("log", lambda: proj(T.log(pos)), [pos])
    add("relu", lambda: proj(T.relu(x)), [x])
    add("tanh", lambda: proj(T.tanh(x)), [x])
    add("sigmoid", lambda: proj(T.sigmoid(x)), [x])
    add("gelu", lambda: proj(T.gelu(x)), [x])
    add("elu", lambda: proj(T.elu(x)), [x])
    logits = _rand(rng, 5, 4)
    labels = rng.integers(0, 4, 5)
    add("cross_entropy", lambda: cross_entropy(logits, labels), [logits])
    tgt = rng.uniform(-1, 1, (3, 4))
    add("l1", lambda: l1_loss(x, tgt), [x])
    add("mse", lambda: mse_loss(x, tgt), [x])
    xs = _rand(rng, 2, 6)
    wv = _rand(rng, 7)
    rows = np.array([0, 0, 1, 2, 2, 3, 3])
    cols = np.array([0, 5, 1, 2, 4, 3, 0])
    add("window_matmul", lambda: T.sum(T.square(T.window_matmul(xs, wv, rows, cols, 4))), [xs, wv])

    # continuous layers: 2 strides, 5 points, learned kernel
    cloud = _toy_cloud(rng)
    spec = FilterSpec([1.0, 1.0], StrideSet([[0.0, 0.0], [1.0, 0.0]]))
    kern = Learned(Mlp([2, 4, 1], "tanh", rng))
    conv = ContConv(1, 1, spec, [[kern]], empty_policy="zero", bias=True)
    vals = _rand(rng, 2, 5, 1)
    add("cont_conv", lambda: T.sum(T.square(conv(cloud, vals))), [vals, conv.bias, *conv.parameters()])
    kern_t = Learned(Mlp([2, 4, 1], "tanh", rng))
    convt = ContConvTranspose(1, 1, spec, [[kern_t]], overlap="mean")
    lat = _rand(rng, 2, 2, 1)
    add("cont_conv_transpose", lambda: T.sum(T.square(convt(lat, cloud))), [lat, *convt.parameters()])
    shared = ContConv(2, 1, spec, [Learned(Mlp([3, 4, 1], "gelu", rng))], strategy="shared3d")
    vals2 = _rand(rng, 2, 5, 2)
    add("cont_conv_shared3d", lambda: T.sum(T.square(shared(cloud, vals2))), [vals2, *shared.parameters()])
    return cases


def ccnn_toy(seed: int = 0) -> tuple[Callable[[], Tensor], list[Tensor]]:
    """Continuous conv (learned kernel) -> tanh -> linear -> cross-entropy on a 8x8 image batch."""
    from .experiments.mnist import CCNN, CcnnConfig

    rng = make_rng(seed)
    cfg = CcnnConfig(image_size=8, head=(6, 4))
    net = CCNN(cfg, rng)
    # zero biases put ReLU inputs exactly on the kink at local coordinate (0, 0)
    for name, p in net.named_parameters():
        if name.endswith("bias"):
            p.data = rng.uniform(-0.5, 0.5, p.shape)
    imgs = rng.uniform(0, 1, (3, 8, 8))
    labels = rng.integers(0, 10, 3)
    return (lambda: cross_entropy(net(imgs), labels)), net.parameters()


def run_suite(seed: int = 0) -> dict[str, float]:
    results = {name: check(f, ins) for name, (f, ins) in op_cases(seed).items()}
    f, ins = ccnn_toy(seed)
    results["ccnn_toy"] = check(f, ins)
    return results
