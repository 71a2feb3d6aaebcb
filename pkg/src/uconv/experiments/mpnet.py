"""Two-stage reduced model for a moving interface.

Stage 1 trains an autoencoder whose encoder is a continuous convolution and
whose decoder multiplies a dense branch with a transposed continuous
convolution branch. Stage 2 freezes it and fits a small MLP from time to the
latent code, so a snapshot at an unseen time is ``decoder(timenet(t))``.
"""

from __future__ import annotations

import hashlib
import time
from dataclasses import asdict, dataclass

import numpy as np

from .. import tensor as T
from ..checkpoint import save_model
from ..conv import ContConv, ContConvTranspose, FilterSpec, Learned, StrideSet, gen_stride_grid
from ..nn import (
    Adam,
    AdaptiveSigmoid,
    ExponentialLR,
    Linear,
    Mlp,
    Module,
    activation,
    loss,
    make_rng,
    rel_l2_error,
)
from ..oracles import pod_fit, pod_predict
from ..pointfield import SnapshotSeries
from ..synthetic import CloudSpec, sample_cloud, traveling_wave_values
from .report import RunReport

__all__ = [
    "MpNetConfig",
    "StateError",
    "MpNetAE",
    "MpNet",
    "make_series",
    "split_indices",
    "run_mpnet",
    "run_pod_baseline",
]


class StateError(RuntimeError):
    """Raised when the training stages run out of order."""


@dataclass
class MpNetConfig:
    length: float = 6.0
    height: float = 2.0
    n_points: int = 2000
    n_times: int = 200
    t_end: float = 1.0
    n_train: int = 90
    data_seed: int = 0
    speed: float = 4.0
    sharpness: float = 10.0
    x0: float = 1.0
    amplitude: float = 0.0
    enc_filter: tuple[float, float] = (0.4, 0.2)
    dec_filter: tuple[float, float] = (0.4, 0.4)
    dec_step: tuple[float, float] = (0.4, 0.2)
    kernel_widths: tuple[int, ...] = (10, 40, 80)
    kernel_act: str = "adaptive_sigmoid"
    latent: int = 30
    lr: float = 1e-3
    gamma: float = 0.99
    epochs: int = 300
    batch: int = 5
    loss: str = "mse"
    time_widths: tuple[int, ...] = (40, 80)
    time_act: str = "relu"
    time_lr: float = 1e-3
    time_epochs: int = 10000
    time_batch: int = 5
    pod_rank: int = 30


def make_series(cfg: MpNetConfig) -> SnapshotSeries:
    coords = sample_cloud(CloudSpec((0.0, 0.0), (cfg.length, cfg.height), cfg.n_points), cfg.data_seed)
    times = np.linspace(0.0, cfg.t_end, cfg.n_times)
    vals = np.stack(
        [
            traveling_wave_values(coords, t, c=cfg.speed, k=cfg.sharpness, x0=cfg.x0,
                                  amplitude=cfg.amplitude, wavelength=cfg.height)[:, None]
            for t in times
        ]
    )
    return SnapshotSeries(coords, times, vals)


def split_indices(n_times: int, n_train: int) -> tuple[np.ndarray, np.ndarray]:
    """Equally spaced training snapshots (first and last included); the rest are test."""
    if not 2 <= n_train < n_times:
        raise ValueError(f"need 2 <= n_train < n_times, got {n_train} of {n_times}")
    train = np.unique(np.rint(np.linspace(0, n_times - 1, n_train)).astype(int))
    test = np.setdiff1d(np.arange(n_times), train)
    return train, test


def decoder_strides(cfg: MpNetConfig) -> StrideSet:
    """Origins on the encoder lattice, so both layers have the same window count.

    Decoder windows are taller than the vertical step, so neighbouring rows
    overlap and the top row overhangs the domain.
    """
    nx = int(np.floor(cfg.length / cfg.enc_filter[0] + 1e-9))
    ny = int(np.floor(cfg.height / cfg.enc_filter[1] + 1e-9))
    return StrideSet.regular([0.0, 0.0], cfg.dec_step, [nx, ny])


class MpNetAE(Module):
    def __init__(self, cfg: MpNetConfig, coords: np.ndarray, rng: np.random.Generator):
        kern = lambda: Learned(Mlp([2, *cfg.kernel_widths, 1], cfg.kernel_act, rng))  # noqa: E731
        enc_grid = gen_stride_grid([0.0, 0.0], [cfg.length, cfg.height], cfg.enc_filter, cfg.enc_filter)
        self.encoder_conv = ContConv(1, 1, FilterSpec(cfg.enc_filter, enc_grid), [[kern()]],
                                     empty_policy="zero")
        n_win = len(enc_grid)
        self.encoder_fc = Linear(n_win, cfg.latent, rng)
        self.encoder_act = activation("elu")
        self.decoder_fc = Linear(cfg.latent, n_win, rng)
        self.decoder_act = activation("elu")
        self.decoder_dense = Linear(n_win, len(coords), rng)
        dec = FilterSpec(cfg.dec_filter, decoder_strides(cfg))
        self.decoder_conv = ContConvTranspose(1, 1, dec, [[kern()]], overlap="sum")
        self.output_act = AdaptiveSigmoid()
        self.n_windows = n_win
        self._coords = coords

    def encode(self, values) -> T.Tensor:
        b = values.shape[0]
        h = T.reshape(self.encoder_conv(self._coords, values), (b, self.n_windows))
        return self.encoder_act(self.encoder_fc(h))

    def decode(self, z) -> T.Tensor:
        b = z.shape[0]
        h = self.decoder_act(self.decoder_fc(z))
        dense = self.decoder_dense(h)
        gate = T.sigmoid(T.reshape(self.decoder_conv(T.reshape(h, (b, self.n_windows, 1)), self._coords),
                                   (b, len(self._coords))))
        out = self.output_act(T.mul(dense, gate))
        return T.reshape(out, (b, len(self._coords), 1))

    def forward(self, values) -> T.Tensor:
        return self.decode(self.encode(values))


def _checksum(module: Module) -> str:
    h = hashlib.blake2b(digest_size=16)
    for name, arr in sorted(module.state_dict().items()):
        h.update(name.encode())
        h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()


class MpNet(Module):
    """Autoencoder plus time network, trained in two ordered stages."""

    def __init__(self, cfg: MpNetConfig, coords: np.ndarray, rng: np.random.Generator):
        self.cfg = cfg
        self.rng = rng
        self.ae = MpNetAE(cfg, coords, rng)
        self.timenet = Mlp([1, *cfg.time_widths, cfg.latent], cfg.time_act, rng)
        self.ae_trained = False
        self.ae_checksum: str | None = None

    def fit_autoencoder(self, snapshots: np.ndarray) -> list[float]:
        cfg = self.cfg
        opt = Adam(self.ae.parameters(), lr=cfg.lr)
        sched = ExponentialLR(opt, cfg.gamma)
        trace = []
        for _ in range(cfg.epochs):
            order = self.rng.permutation(len(snapshots))
            for i in range(0, len(order), cfg.batch):
                xb = snapshots[order[i : i + cfg.batch]]
                opt.zero_grad()
                l = loss(cfg.loss, self.ae(T.Tensor(xb)), xb)
                l.backward()
                opt.step()
                trace.append(l.item())
            sched.step()
        self.ae_trained = True
        self.ae_checksum = _checksum(self.ae)
        return trace

    def latents(self, snapshots: np.ndarray) -> np.ndarray:
        with T.no_grad():
            return self.ae.encode(T.Tensor(snapshots)).data

    def fit_timenet(self, times: np.ndarray, snapshots: np.ndarray) -> list[float]:
        if not self.ae_trained:
            raise StateError("the autoencoder must be trained before the time network")
        cfg = self.cfg
        target = self.latents(snapshots)
        t = np.asarray(times, dtype=np.float64).reshape(-1, 1)
        opt = Adam(self.timenet.parameters(), lr=cfg.time_lr)
        trace = []
        for _ in range(cfg.time_epochs):
            order = self.rng.permutation(len(t))
            epoch_loss = 0.0
            for i in range(0, len(order), cfg.time_batch):
                idx = order[i : i + cfg.time_batch]
                opt.zero_grad()
                l = loss(cfg.loss, self.timenet(T.Tensor(t[idx])), target[idx])
                l.backward()
                opt.step()
                epoch_loss += l.item() * len(idx)
            trace.append(epoch_loss / len(t))
        if _checksum(self.ae) != self.ae_checksum:
            raise StateError("autoencoder parameters changed during time-network training")
        return trace

    def predict(self, times) -> np.ndarray:
        """Snapshots at ``times``, shape (len(times), N, 1)."""
        if not self.ae_trained:
            raise StateError("predict called before the autoencoder was trained")
        t = np.asarray(times, dtype=np.float64).reshape(-1, 1)
        with T.no_grad():
            return self.ae.decode(self.timenet(T.Tensor(t))).data

    def forward(self, times) -> np.ndarray:
        return self.predict(times)

    def reconstruct(self, snapshots: np.ndarray) -> np.ndarray:
        with T.no_grad():
            return self.ae(T.Tensor(snapshots)).data


def _per_snapshot(pred: np.ndarray, truth: np.ndarray) -> np.ndarray:
    return np.array([rel_l2_error(p, q) for p, q in zip(pred, truth)])


def run_pod_baseline(cfg: MpNetConfig, series: SnapshotSeries | None = None) -> RunReport:
    """POD (rank ``cfg.pod_rank``) with Gaussian-RBF interpolation of the coefficients in time."""
    series = series if series is not None else make_series(cfg)
    tr, te = split_indices(len(series.times), cfg.n_train)
    start = time.perf_counter()
    snaps = series.values[:, :, 0]
    model = pod_fit(snaps[tr].T, series.times[tr], cfg.pod_rank)
    pred = pod_predict(model, series.times).T
    err = _per_snapshot(pred, snaps)
    return RunReport(
        name="pod_baseline",
        config=asdict(cfg),
        seed=cfg.data_seed,
        metrics={
            "rank": model.rank,
            "train_rel_l2": float(np.mean(err[tr])),
            "test_rel_l2": float(np.mean(err[te])),
        },
        wall_time=time.perf_counter() - start,
        extra={"per_snapshot": err.tolist(), "train_indices": tr.tolist()},
    )


def run_mpnet(cfg: MpNetConfig, seed: int = 0, series: SnapshotSeries | None = None,
              checkpoint=None) -> RunReport:
    series = series if series is not None else make_series(cfg)
    tr, te = split_indices(len(series.times), cfg.n_train)
    rng = make_rng(seed)
    start = time.perf_counter()
    net = MpNet(cfg, series.coords, rng)
    ae_trace = net.fit_autoencoder(series.values[tr])
    time_trace = net.fit_timenet(series.times[tr], series.values[tr])
    if checkpoint is not None:
        save_model(checkpoint, net)
    pred = net.predict(series.times)
    err = _per_snapshot(pred, series.values)
    recon = _per_snapshot(net.reconstruct(series.values), series.values)
    pod = run_pod_baseline(cfg, series)
    return RunReport(
        name="mpnet",
        config=asdict(cfg),
        seed=seed,
        loss_trace=ae_trace,
        metrics={
            "train_rel_l2": float(np.mean(err[tr])),
            "test_rel_l2": float(np.mean(err[te])),
            "ae_train_rel_l2": float(np.mean(recon[tr])),
            "ae_test_rel_l2": float(np.mean(recon[te])),
            "pod_train_rel_l2": pod.metrics["train_rel_l2"],
            "pod_test_rel_l2": pod.metrics["test_rel_l2"],
            "final_time_loss": time_trace[-1],
        },
        wall_time=time.perf_counter() - start,
        extra={
            "times": series.times.tolist(),
            "train_indices": tr.tolist(),
            "per_snapshot": err.tolist(),
            "pod_per_snapshot": pod.extra["per_snapshot"],
            "time_loss_trace": time_trace,
            "ae_checksum": net.ae_checksum,
        },
    )


def per_snapshot_rows(report: RunReport) -> list[tuple[int, float, str, float, float]]:
    """(index, t, split, mpnet error, pod error) rows for CSV output."""
    train = set(report.extra["train_indices"])
    return [
        (i, t, "train" if i in train else "test", e, p)
        for i, (t, e, p) in enumerate(
            zip(report.extra["times"], report.extra["per_snapshot"], report.extra["pod_per_snapshot"])
        )
    ]
