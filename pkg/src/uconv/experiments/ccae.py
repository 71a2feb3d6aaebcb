"""Continuous convolutional autoencoder vs a plain MLP autoencoder on bump-flow fields."""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .. import tensor as T
from ..checkpoint import save_model
from ..conv import (
    ContConv,
    ContConvTranspose,
    FilterSpec,
    Learned,
    StrideSet,
    Tabulated,
    gen_stride_grid,
)
from ..nn import Adam, Linear, Mlp, Module, activation, loss, make_rng, rel_l2_error
from ..synthetic import BACKSTEP, bump_flow_family
from ..tensor import ContractError
from .report import RunReport

__all__ = ["CcaeConfig", "CCAE", "MlpAE", "make_dataset", "run_ccae", "summarize", "train_autoencoder"]


@dataclass
class CcaeConfig:
    n_samples: int = 500
    n_points: int = 1639
    data_seed: int = 0
    filter_size: tuple[float, float] = (0.4, 0.1)
    latent: int = 90
    kernel_widths: tuple[int, ...] = (40, 40)
    act: str = "gelu"
    loss: str = "l1"
    lr: float = 1e-3
    epochs: int = 150
    batch: int = 10
    train_fraction: float = 0.2


def make_dataset(cfg: CcaeConfig):
    coords, mus, values = bump_flow_family(cfg.n_samples, cfg.n_points, cfg.data_seed)
    return coords, mus, values


def _windows_on_cloud(coords: np.ndarray, size) -> StrideSet:
    """Regular tiling of the channel box, keeping only windows that hold points."""
    g = BACKSTEP
    grid = gen_stride_grid([0.0, 0.0], [g["length"], g["height"]], size, size)
    probe = ContConv(1, 1, FilterSpec(size, grid), [[Tabulated.constant(1.0)]], empty_policy="drop")
    return StrideSet(grid.origins[probe.output_windows(coords)])


class CCAE(Module):
    """cont-conv -> Linear(S, 90) -> GELU | Linear(90, S) -> transposed cont-conv."""

    def __init__(self, cfg: CcaeConfig, coords: np.ndarray, rng: np.random.Generator):
        strides = _windows_on_cloud(coords, cfg.filter_size)
        spec = FilterSpec(cfg.filter_size, strides)
        kern = lambda: Learned(Mlp([2, *cfg.kernel_widths, 1], cfg.act, rng))  # noqa: E731
        self.encoder_conv = ContConv(1, 1, spec, [[kern()]], empty_policy="zero")
        self.encoder_fc = Linear(len(strides), cfg.latent, rng)
        self.encoder_act = activation(cfg.act)
        self.decoder_fc = Linear(cfg.latent, len(strides), rng)
        self.decoder_conv = ContConvTranspose(1, 1, spec, [[kern()]], overlap="sum")
        self._coords = coords

    @property
    def n_windows(self) -> int:
        return len(self.encoder_conv.spec.strides)

    def encode(self, values) -> T.Tensor:
        b = values.shape[0]
        h = T.reshape(self.encoder_conv(self._coords, values), (b, -1))
        return self.encoder_act(self.encoder_fc(h))

    def decode(self, z) -> T.Tensor:
        b = z.shape[0]
        lat = T.reshape(self.decoder_fc(z), (b, self.n_windows, 1))
        return self.decoder_conv(lat, self._coords)

    def forward(self, values) -> T.Tensor:
        return self.decode(self.encode(values))


class MlpAE(Module):
    """Linear(N, 90) -> GELU -> Linear(90, N); the CCAE with its conv layers removed."""

    def __init__(self, cfg: CcaeConfig, n_points: int, rng: np.random.Generator):
        self.encoder = Linear(n_points, cfg.latent, rng)
        self.act = activation(cfg.act)
        self.decoder = Linear(cfg.latent, n_points, rng)

    def forward(self, values) -> T.Tensor:
        b, n, _ = values.shape
        h = self.act(self.encoder(T.reshape(values, (b, n))))
        return T.reshape(self.decoder(h), (b, n, 1))


def train_autoencoder(net: Module, x: np.ndarray, cfg: CcaeConfig, rng) -> list[float]:
    opt = Adam(net.parameters(), lr=cfg.lr)
    trace = []
    for _ in range(cfg.epochs):
        order = rng.permutation(len(x))
        for i in range(0, len(x), cfg.batch):
            xb = x[order[i : i + cfg.batch]]
            opt.zero_grad()
            l = loss(cfg.loss, net(T.Tensor(xb)), xb)
            l.backward()
            opt.step()
            trace.append(l.item())
    return trace


def _predict(net: Module, x: np.ndarray, batch: int = 50) -> np.ndarray:
    with T.no_grad():
        return np.concatenate([net(T.Tensor(x[i : i + batch])).data for i in range(0, len(x), batch)])


def _errors(pred: np.ndarray, truth: np.ndarray) -> list[float]:
    return [rel_l2_error(p, t) for p, t in zip(pred, truth)]


def run_ccae(cfg: CcaeConfig, fractions=(0.2,), repeats: int = 5, seed: int = 0,
             archs=("ccae", "mlp"), data=None, checkpoint_dir=None) -> list[RunReport]:
    """Train both autoencoders for every train fraction and init seed.

    Values are divided by the largest training magnitude before training;
    relative errors are scale-free, so they are reported unchanged.
    """
    coords, _, values = data if data is not None else make_dataset(cfg)
    split_rng = make_rng(cfg.data_seed + 2)
    perm = split_rng.permutation(len(values))
    reports = []
    for frac in fractions:
        if not 0.0 < frac < 1.0:
            raise ContractError(f"train fraction must lie in (0, 1), got {frac}")
        n_train = int(round(frac * len(values)))
        tr, te = perm[:n_train], perm[n_train:]
        scale = float(np.max(np.abs(values[tr])))
        xtr, xte = values[tr] / scale, values[te] / scale
        for arch in archs:
            for rep in range(repeats):
                run_seed = seed + rep
                rng = make_rng(run_seed)
                start = time.perf_counter()
                net = CCAE(cfg, coords, rng) if arch == "ccae" else MlpAE(cfg, len(coords), rng)
                trace = train_autoencoder(net, xtr, cfg, rng)
                if checkpoint_dir is not None:
                    save_model(Path(checkpoint_dir) / f"{arch}_f{frac:g}_r{rep}.ucnv", net)
                train_err = _errors(_predict(net, xtr), xtr)
                test_err = _errors(_predict(net, xte), xte)
                reports.append(
                    RunReport(
                        name=f"{arch}_f{frac:g}_r{rep}",
                        config={**asdict(cfg), "arch": arch, "fraction": frac, "repeat": rep},
                        seed=run_seed,
                        loss_trace=trace,
                        metrics={
                            "train_rel_l2": float(np.mean(train_err)),
                            "test_rel_l2": float(np.mean(test_err)),
                            "n_train": int(n_train),
                            "n_test": int(len(te)),
                        },
                        wall_time=time.perf_counter() - start,
                    )
                )
    return reports


def summarize(reports: list[RunReport]) -> dict:
    """Mean test error per (arch, fraction)."""
    out: dict = {}
    for r in reports:
        key = f"{r.config['arch']}@{r.config['fraction']:g}"
        out.setdefault(key, []).append(r.metrics["test_rel_l2"])
    return {k: float(np.mean(v)) for k, v in out.items()}
