"""MLP building blocks, losses, optimizers and learning-rate schedules."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from . import tensor as T
from .tensor import ContractError, DimensionError, Tensor

__all__ = [
    "Module",
    "Linear",
    "Activation",
    "AdaptiveSigmoid",
    "Mlp",
    "Sequential",
    "activation",
    "loss",
    "cross_entropy",
    "l1_loss",
    "mse_loss",
    "rel_l2_error",
    "SGD",
    "Adam",
    "ExponentialLR",
    "count_params",
    "make_rng",
]

ACTIVATIONS = ("relu", "tanh", "sigmoid", "gelu", "elu", "adaptive_sigmoid", "identity")


def make_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.uint64(seed))


class Module:
    """Minimal parameter container: attributes that are Tensors with
    ``requires_grad`` or nested Modules (also inside lists) are parameters."""

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        # a tensor shared by several sub-modules is reported once
        seen: set[int] = set()
        for name, value in vars(self).items():
            if name.startswith("_"):
                continue
            for pname, p in _walk(value, f"{prefix}{name}"):
                if id(p) not in seen:
                    seen.add(id(p))
                    yield pname, p

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = set(own) - set(state)
        if missing:
            raise KeyError(f"state dict is missing {sorted(missing)}")
        for name, p in own.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != p.shape:
                raise DimensionError(f"{name}: checkpoint shape {arr.shape} != {p.shape}")
            p.data = arr.copy()

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


def _walk(value, name: str):
    if isinstance(value, Tensor):
        if value.requires_grad:
            yield name, value
    elif isinstance(value, Module):
        yield from value.named_parameters(prefix=name + ".")
    elif isinstance(value, (list, tuple)):
        for i, item in enumerate(value):
            yield from _walk(item, f"{name}.{i}")


class Linear(Module):
    """Affine map ``x @ W.T + b`` with W of shape (n_out, n_in)."""

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator):
        bound = 1.0 / np.sqrt(n_in)
        self.weight = Tensor(rng.uniform(-bound, bound, size=(n_out, n_in)), requires_grad=True)
        self.bias = Tensor(np.zeros(n_out), requires_grad=True)

    @property
    def n_in(self) -> int:
        return self.weight.shape[1]

    @property
    def n_out(self) -> int:
        return self.weight.shape[0]

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise DimensionError(f"Linear({self.n_in}->{self.n_out}) got input {x.shape}")
        return T.bias_add(T.matmul(x, T.transpose(self.weight)), self.bias)


class Activation(Module):
    def __init__(self, tag: str):
        if tag not in ACTIVATIONS or tag == "adaptive_sigmoid":
            raise ValueError(f"unknown parameter-free activation {tag!r}")
        self.tag = tag

    def forward(self, x: Tensor) -> Tensor:
        if self.tag == "identity":
            return x
        return getattr(T, self.tag)(x)

    def __repr__(self) -> str:
        return f"Activation({self.tag})"


class AdaptiveSigmoid(Module):
    """sigmoid(alpha * x) with one trainable slope alpha, initialised to 1."""

    tag = "adaptive_sigmoid"

    def __init__(self, alpha: float = 1.0):
        self.alpha = Tensor(np.array(alpha), requires_grad=True)

    def forward(self, x: Tensor) -> Tensor:
        return T.sigmoid(T.scale(x, self.alpha))


def activation(tag: str) -> Module:
    return AdaptiveSigmoid() if tag == "adaptive_sigmoid" else Activation(tag)


class Sequential(Module):
    def __init__(self, *layers: Module):
        self.layers = list(layers)

    def forward(self, x: Tensor) -> Tensor:
        for layer in self.layers:
            x = layer(x)
        return x


class Mlp(Sequential):
    """Linear layers of the given widths with ``act`` between them.

    ``widths`` includes input and output: ``Mlp([2, 12, 12, 1], "relu")``
    is the 205-parameter kernel net. No activation follows the last layer
    unless ``final`` is given.
    """

    def __init__(
        self,
        widths: Sequence[int],
        act: str,
        rng: np.random.Generator,
        final: str | None = None,
    ):
        if len(widths) < 2:
            raise ValueError("an MLP needs at least input and output widths")
        layers: list[Module] = []
        for i, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
            layers.append(Linear(a, b, rng))
            if i < len(widths) - 2:
                layers.append(activation(act))
        if final is not None:
            layers.append(activation(final))
        super().__init__(*layers)
        self.widths = list(widths)
        self.act = act

    @property
    def n_in(self) -> int:
        return self.widths[0]

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise DimensionError(f"Mlp expects (batch, {self.n_in}) input, got {x.shape}")
        return super().forward(x)


# -- losses ---------------------------------------------------------------------
def cross_entropy(logits: Tensor, labels) -> Tensor:
    return T.cross_entropy_logits(logits, labels)


def _check_pair(pred: Tensor, target) -> Tensor:
    target = T.tensor(target)
    if pred.shape != target.shape:
        raise DimensionError(f"loss: prediction {pred.shape} vs target {target.shape}")
    if pred.size == 0:
        raise ContractError("loss on an empty batch")
    return target


def l1_loss(pred: Tensor, target) -> Tensor:
    target = _check_pair(pred, target)
    return T.mean(T.abs(T.sub(pred, target)))


def mse_loss(pred: Tensor, target) -> Tensor:
    target = _check_pair(pred, target)
    return T.mean(T.square(T.sub(pred, target)))


def loss(kind: str, pred: Tensor, target) -> Tensor:
    fn = {"cross_entropy": cross_entropy, "l1": l1_loss, "mse": mse_loss}.get(kind)
    if fn is None:
        raise ValueError(f"unknown loss {kind!r}")
    return fn(pred, target)


def rel_l2_error(pred, truth) -> float:
    """Percentage relative l2 error ``100 * |pred - truth| / |truth|``."""
    p = pred.data if isinstance(pred, Tensor) else np.asarray(pred, dtype=np.float64)
    t = truth.data if isinstance(truth, Tensor) else np.asarray(truth, dtype=np.float64)
    if p.shape != t.shape:
        raise DimensionError(f"rel_l2_error: {p.shape} vs {t.shape}")
    denom = np.linalg.norm(t.ravel())
    if denom == 0.0:
        raise ContractError("rel_l2_error: truth has zero norm")
    return float(100.0 * np.linalg.norm((p - t).ravel()) / denom)


# -- optimizers -----------------------------------------------------------------
class _Optimizer:
    def __init__(self, params: Sequence[Tensor], lr: float):
        self.params = list(params)
        self.lr = float(lr)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def _grads(self) -> list[np.ndarray]:
        out = []
        for i, p in enumerate(self.params):
            if p.grad is None:
                raise ContractError(f"parameter {i} {p.shape} has no gradient; call backward() first")
            out.append(p.grad)
        return out


class SGD(_Optimizer):
    """v <- momentum * v + g;  p <- p - lr * v."""

    def __init__(self, params, lr: float, momentum: float = 0.0):
        super().__init__(params, lr)
        self.momentum = float(momentum)
        self.velocity = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        for p, v, g in zip(self.params, self.velocity, self._grads()):
            v *= self.momentum
            v += g
            p.data = p.data - self.lr * v


class Adam(_Optimizer):
    def __init__(self, params, lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8):
        super().__init__(params, lr)
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, m, v, g in zip(self.params, self.m, self.v, self._grads()):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data = p.data - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass
class ExponentialLR:
    optimizer: _Optimizer
    gamma: float
    base_lr: float = field(init=False)
    steps: int = field(init=False, default=0)

    def __post_init__(self):
        self.base_lr = self.optimizer.lr

    def step(self) -> None:
        self.steps += 1
        self.optimizer.lr = self.base_lr * self.gamma**self.steps


def count_params(module: Module) -> tuple[int, dict[str, int]]:
    """Total trainable scalar count plus a per-tensor breakdown."""
    breakdown = {name: int(p.size) for name, p in module.named_parameters()}
    return sum(breakdown.values()), breakdown
