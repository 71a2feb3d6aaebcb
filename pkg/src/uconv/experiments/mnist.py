"""CCNN vs CNN classification and the missing-pixel sweep."""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .. import tensor as T
from ..conv import ContConv, FilterSpec, Learned, gen_stride_grid
from ..idx import DOWNLOAD_HINT, load_mnist, mnist_available, mnist_paths
from ..checkpoint import save_model
from ..nn import SGD, Linear, Mlp, Module, count_params, cross_entropy, make_rng
from ..pointfield import bed_of_nails, keep_indices
from ..tensor import Tensor
from .report import RunReport

__all__ = [
    "CcnnConfig",
    "PartialSweepConfig",
    "DiscreteConv",
    "CCNN",
    "SweepNet",
    "load_split",
    "run_mnist",
    "run_partial_sweep",
    "accuracy",
]


@dataclass
class CcnnConfig:
    first_layer: str = "continuous"  # or "discrete"
    image_size: int = 28
    conv1_size: int = 4
    conv1_stride: int = 4
    conv2_channels: int = 4
    head: tuple[int, ...] = (150, 24)
    n_classes: int = 10
    kernel_widths: tuple[int, ...] = (12, 12)
    kernel_act: str = "relu"
    act: str = "tanh"
    lr: float = 1e-3
    momentum: float = 0.9
    batch: int = 8
    epochs: int = 2
    train_n: int = 8000
    test_n: int = 2000


@dataclass
class PartialSweepConfig:
    conv_size: int = 4
    conv_stride: int = 4
    kernel_widths: tuple[int, ...] = (12, 12)
    kernel_act: str = "relu"
    n_classes: int = 10
    lr: float = 1e-3
    momentum: float = 0.9
    batch: int = 8
    epochs: int = 2
    train_n: int = 8000
    test_n: int = 2000
    percentages: tuple[float, ...] = (100.0, 75.0, 50.0, 20.0, 10.0)
    image_size: int = 28


class DiscreteConv(Module):
    """Single-channel valid-mode discrete convolution with a scalar bias."""

    def __init__(self, size: int, stride: int, rng: np.random.Generator):
        bound = 1.0 / size
        self.weight = Tensor(rng.uniform(-bound, bound, (size * size, 1)), requires_grad=True)
        self.bias = Tensor(np.zeros(1), requires_grad=True)
        self.size = size
        self.stride = stride

    def patches(self, images: np.ndarray) -> np.ndarray:
        b, h, w = images.shape
        k, s = self.size, self.stride
        oh, ow = (h - k) // s + 1, (w - k) // s + 1
        view = np.lib.stride_tricks.sliding_window_view(images, (k, k), axis=(1, 2))[:, ::s, ::s]
        return view[:, :oh, :ow].reshape(b * oh * ow, k * k)

    def forward(self, images: np.ndarray) -> Tensor:
        b = images.shape[0]
        cols = self.patches(images)
        out = T.bias_add(T.matmul(Tensor(cols), self.weight), self.bias)
        return T.reshape(out, (b, -1))


def _kernel(widths, act, rng, n_in=2) -> Learned:
    return Learned(Mlp([n_in, *widths, 1], act, rng))


class CCNN(Module):
    """conv1 (continuous or discrete, 1->1) -> tanh -> 1x1 conv (1->4) -> tanh -> MLP head.

    The head is ``Linear(S*4, 150) tanh Linear(150, 24) tanh Linear(24, 10)``.
    """

    def __init__(self, cfg: CcnnConfig, rng: np.random.Generator):
        self.cfg = cfg
        n = cfg.image_size
        if cfg.first_layer == "continuous":
            spec = FilterSpec(
                [cfg.conv1_size] * 2,
                gen_stride_grid([0, 0], [n, n], cfg.conv1_size, cfg.conv1_stride),
            )
            self.conv1 = ContConv(1, 1, spec, [[_kernel(cfg.kernel_widths, cfg.kernel_act, rng)]])
        elif cfg.first_layer == "discrete":
            self.conv1 = DiscreteConv(cfg.conv1_size, cfg.conv1_stride, rng)
        else:
            raise ValueError(f"first_layer must be 'continuous' or 'discrete', got {cfg.first_layer!r}")
        side = (n - cfg.conv1_size) // cfg.conv1_stride + 1
        self.n_windows = side * side
        self.conv2 = Linear(1, cfg.conv2_channels, rng)  # 1x1 convolution == per-pixel linear map
        self.head = Mlp([self.n_windows * cfg.conv2_channels, *cfg.head, cfg.n_classes], cfg.act, rng)
        self._coords = bed_of_nails(np.zeros((n, n))).coords

    def forward(self, images: np.ndarray) -> Tensor:
        b = images.shape[0]
        if isinstance(self.conv1, ContConv):
            vals = images.reshape(b, -1, 1)
            h = T.reshape(self.conv1(self._coords, vals), (b, -1))
        else:
            h = self.conv1(images)
        h = getattr(T, self.cfg.act)(h)
        h = self.conv2(T.reshape(h, (b * self.n_windows, 1)))
        h = getattr(T, self.cfg.act)(h)
        return self.head(T.reshape(h, (b, -1)))


class SweepNet(Module):
    """Continuous conv on the kept pixels -> ReLU -> Linear(S', 10).

    S' counts the windows that still contain at least one kept pixel, so the
    classifier width shrinks as pixels are removed.
    """

    def __init__(self, cfg: PartialSweepConfig, kept: np.ndarray, rng: np.random.Generator):
        n = cfg.image_size
        spec = FilterSpec(
            [cfg.conv_size] * 2, gen_stride_grid([0, 0], [n, n], cfg.conv_size, cfg.conv_stride)
        )
        self.conv = ContConv(1, 1, spec, [[_kernel(cfg.kernel_widths, cfg.kernel_act, rng)]],
                             empty_policy="drop")
        self._kept = np.asarray(kept)
        self._coords = bed_of_nails(np.zeros((n, n))).coords[self._kept]
        self.n_out = len(self.conv.output_windows(self._coords))
        self.linear = Linear(self.n_out, cfg.n_classes, rng)

    def forward(self, images: np.ndarray) -> Tensor:
        b = images.shape[0]
        vals = images.reshape(b, -1)[:, self._kept].reshape(b, -1, 1)
        h = T.relu(T.reshape(self.conv(self._coords, vals), (b, -1)))
        return self.linear(h)


def load_split(mnist_dir, train_n: int, test_n: int):
    if not mnist_available(mnist_dir):
        raise FileNotFoundError(f"MNIST not found in {mnist_dir!r}. {DOWNLOAD_HINT}")
    p = mnist_paths(mnist_dir)
    xtr, ytr = load_mnist(p["train_images"], p["train_labels"], train_n)
    xte, yte = load_mnist(p["test_images"], p["test_labels"], test_n)
    return xtr, ytr, xte, yte


def accuracy(net: Module, x: np.ndarray, y: np.ndarray, batch: int = 500) -> float:
    correct = 0
    with T.no_grad():
        for i in range(0, len(x), batch):
            logits = net(x[i : i + batch]).data
            correct += int(np.sum(np.argmax(logits, axis=1) == y[i : i + batch]))
    return correct / len(x) if len(x) else float("nan")


def train_classifier(net: Module, x, y, *, lr, momentum, batch, epochs, rng) -> list[float]:
    opt = SGD(net.parameters(), lr=lr, momentum=momentum)
    trace = []
    for _ in range(epochs):
        order = rng.permutation(len(x))
        for i in range(0, len(x), batch):
            idx = order[i : i + batch]
            opt.zero_grad()
            loss = cross_entropy(net(x[idx]), y[idx])
            loss.backward()
            opt.step()
            trace.append(loss.item())
    return trace


def run_mnist(cfg: CcnnConfig, data, seed: int, checkpoint=None) -> RunReport:
    """Train one CCNN/CNN on ``data = (xtr, ytr, xte, yte)`` and report accuracy."""
    xtr, ytr, xte, yte = data
    xtr, ytr = xtr[: cfg.train_n], ytr[: cfg.train_n]
    xte, yte = xte[: cfg.test_n], yte[: cfg.test_n]
    rng = make_rng(seed)
    net = CCNN(cfg, rng)
    total, breakdown = count_params(net)
    start = time.perf_counter()
    untrained = accuracy(net, xte, yte)
    trace = train_classifier(net, xtr, ytr, lr=cfg.lr, momentum=cfg.momentum,
                             batch=cfg.batch, epochs=cfg.epochs, rng=rng)
    metrics = {
        "untrained_test_accuracy": untrained,
        "train_accuracy": accuracy(net, xtr, ytr),
        "test_accuracy": accuracy(net, xte, yte),
        "n_params": total,
    }
    if checkpoint is not None:
        save_model(checkpoint, net)
    return RunReport(
        name=f"mnist_{cfg.first_layer}",
        config=asdict(cfg),
        seed=seed,
        loss_trace=trace,
        metrics=metrics,
        wall_time=time.perf_counter() - start,
        extra={"param_breakdown": breakdown},
    )


def run_partial_sweep(cfg: PartialSweepConfig, data, seed: int, checkpoint_dir=None) -> list[RunReport]:
    """One training per kept-pixel percentage.

    A single pixel mask per percentage (seeded) is shared by all train and
    test images, which keeps the classifier width fixed within a run.
    """
    xtr, ytr, xte, yte = data
    xtr, ytr = xtr[: cfg.train_n], ytr[: cfg.train_n]
    xte, yte = xte[: cfg.test_n], yte[: cfg.test_n]
    n_pix = cfg.image_size**2
    reports = []
    for pct in cfg.percentages:
        kept = keep_indices(n_pix, pct, seed)
        rng = make_rng(seed)
        start = time.perf_counter()
        net = SweepNet(cfg, kept, rng)
        trace = train_classifier(net, xtr, ytr, lr=cfg.lr, momentum=cfg.momentum,
                                 batch=cfg.batch, epochs=cfg.epochs, rng=rng)
        if checkpoint_dir is not None:
            save_model(Path(checkpoint_dir) / f"partial_{pct:g}.ucnv", net)
        reports.append(
            RunReport(
                name=f"partial_{pct:g}",
                config={**asdict(cfg), "percentage": pct},
                seed=seed,
                loss_trace=trace,
                metrics={
                    "percentage": pct,
                    "kept_pixels": int(len(kept)),
                    "conv_outputs": net.n_out,
                    "train_accuracy": accuracy(net, xtr, ytr),
                    "test_accuracy": accuracy(net, xte, yte),
                },
                wall_time=time.perf_counter() - start,
            )
        )
    return reports
