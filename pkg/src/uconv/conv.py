"""Trainable continuous convolution over point fields.

For each stride origin tau and output channel c::

    out_c(tau) = sum_{c'} sum_{k in window(tau)} value_{c'}(k) * K_{c,c'}(local(k))

where ``local(k) = (x_k - tau) / size`` lies in [0, 1)^d and the output sample
sits at the window centroid ``tau + size / 2``. The transposed layer stamps
each latent value, weighted by the kernel, onto every output point inside
the corresponding window.

Both layers reduce to one sparse contraction (``tensor.window_matmul``) whose
nonzeros are kernel samples, so gradients reach the kernel MLPs, the bias and
the inputs through the ordinary tape.
"""

from __future__ import annotations

import hashlib
from collections import OrderedDict
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import tensor as T
from .nn import Mlp, Module
from .pointfield import PointField
from .spatial import WindowQuery, build_grid, linear_query
from .tensor import ContractError, DimensionError, Tensor

__all__ = [
    "StrideSet",
    "FilterSpec",
    "Tabulated",
    "Learned",
    "WindowMap",
    "map_windows",
    "gen_stride_grid",
    "ContConv",
    "ContConvTranspose",
    "cont_conv_forward",
    "cont_conv_transpose_forward",
]

STRATEGIES = ("independent2d", "shared3d")
EMPTY_POLICIES = ("drop", "zero")
OVERLAP_POLICIES = ("sum", "mean")


@dataclass(frozen=True)
class StrideSet:
    """Explicit list of window origins, one row per placement."""

    origins: np.ndarray

    def __post_init__(self):
        o = np.array(self.origins, dtype=np.float64)
        if o.ndim == 1:
            o = o[None, :]
        if o.ndim != 2:
            raise DimensionError(f"stride origins must be (S, d), got {o.shape}")
        o.setflags(write=False)
        object.__setattr__(self, "origins", o)

    @classmethod
    def regular(cls, start, step, count) -> StrideSet:
        """Lexicographic grid ``start + k * step`` for k < count on each axis."""
        start = np.asarray(start, dtype=np.float64)
        step = np.asarray(step, dtype=np.float64)
        count = np.asarray(count, dtype=np.int64)
        if np.any(step <= 0):
            raise ContractError(f"stride step must be positive, got {step}")
        axes = [s + np.arange(c) * h for s, h, c in zip(start, step, count)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return cls(np.stack([m.ravel() for m in mesh], axis=1))

    def __len__(self) -> int:
        return self.origins.shape[0]


@dataclass(frozen=True)
class FilterSpec:
    size: np.ndarray
    strides: StrideSet

    def __post_init__(self):
        size = np.asarray(self.size, dtype=np.float64).reshape(-1)
        if np.any(size <= 0):
            raise ContractError(f"filter size must be positive, got {size}")
        if size.shape[0] != self.strides.origins.shape[1]:
            raise DimensionError(
                f"filter is {size.shape[0]}-D but strides are {self.strides.origins.shape[1]}-D"
            )
        object.__setattr__(self, "size", size)

    @property
    def dims(self) -> int:
        return self.size.shape[0]

    def centroids(self) -> np.ndarray:
        return self.strides.origins + self.size / 2.0


def gen_stride_grid(lo, hi, size, step) -> StrideSet:
    """Origins ``lo + k * step`` for every k whose window still fits in ``[lo, hi]``."""
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    size = np.broadcast_to(np.asarray(size, dtype=np.float64), lo.shape)
    step = np.broadcast_to(np.asarray(step, dtype=np.float64), lo.shape)
    if np.any(step <= 0):
        raise ContractError(f"stride step must be positive, got {step}")
    extent = hi - lo
    if np.any(size > extent * (1 + 1e-12)):
        raise ContractError(f"window {size} larger than bounding box {extent}")
    count = np.floor((extent - size) / step + 1e-9).astype(np.int64) + 1
    return StrideSet.regular(lo, step, count)


# -- kernels ------------------------------------------------------------------------
class Tabulated(Module):
    """Fixed closed-form kernel; ``fn`` maps an (M, n_in) array to M values."""

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], n_in: int = 2):
        self._fn = fn
        self.n_in = n_in

    def __call__(self, local: np.ndarray) -> Tensor:
        return Tensor(np.asarray(self._fn(local), dtype=np.float64).reshape(-1, 1))

    @classmethod
    def constant(cls, c: float, n_in: int = 2) -> Tabulated:
        return cls(lambda p: np.full(len(p), float(c)), n_in)

    @classmethod
    def from_grid(cls, weights: np.ndarray) -> Tabulated:
        """Kernel reproducing a k x k weight grid on unit-spaced samples.

        Local coordinate ``u / k`` maps to ``weights[u]`` per axis.
        """
        w = np.asarray(weights, dtype=np.float64)
        shape = np.array(w.shape)

        def fn(p):
            ij = np.clip(np.rint(p * shape).astype(np.int64), 0, shape - 1)
            return w[tuple(ij.T)]

        return cls(fn, w.ndim)


class Learned(Module):
    """Kernel approximated by an MLP with a single output."""

    def __init__(self, mlp: Mlp):
        if mlp.widths[-1] != 1:
            raise DimensionError(f"kernel MLP must have one output, got widths {mlp.widths}")
        self.mlp = mlp
        self.n_in = mlp.n_in

    def __call__(self, local: np.ndarray) -> Tensor:
        return self.mlp(Tensor(local))


# -- window mapping -------------------------------------------------------------------
@dataclass(frozen=True)
class WindowMap:
    """All (point, window) incidences of a cloud against a stride set."""

    point: np.ndarray  # (M,) point index
    window: np.ndarray  # (M,) stride index
    local: np.ndarray  # (M, d) filter-local coordinates
    counts: np.ndarray  # (S,) points per window
    n_points: int


def map_windows(coords: np.ndarray, spec: FilterSpec, backend: str = "grid") -> WindowMap:
    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim != 2 or coords.shape[1] != spec.dims:
        raise DimensionError(f"{spec.dims}-D filter applied to coords of shape {coords.shape}")
    index = build_grid(coords) if backend == "grid" and len(coords) else None
    pts, wins, locs = [], [], []
    for s, origin in enumerate(spec.strides.origins):
        q = WindowQuery(origin, spec.size)
        if len(coords) == 0:
            idx = np.empty(0, dtype=np.intp)
        elif index is not None:
            idx = index.query(q)
        else:
            idx = linear_query(coords, q)
        pts.append(idx)
        wins.append(np.full(len(idx), s, dtype=np.intp))
        locs.append((coords[idx] - origin) / spec.size)
    point = np.concatenate(pts).astype(np.intp)
    window = np.concatenate(wins)
    counts = np.bincount(window, minlength=len(spec.strides))
    return WindowMap(point, window, np.concatenate(locs).reshape(-1, spec.dims), counts, len(coords))


class _MapCache:
    """Small LRU keyed by coordinate content; clouds are immutable."""

    def __init__(self, maxsize: int = 8):
        self.maxsize = maxsize
        self._d: OrderedDict[bytes, WindowMap] = OrderedDict()

    def get(self, coords: np.ndarray, spec: FilterSpec, backend: str) -> WindowMap:
        c = np.ascontiguousarray(coords, dtype=np.float64)
        key = hashlib.blake2b(c.tobytes() + str(c.shape).encode(), digest_size=16).digest()
        hit = self._d.get(key)
        if hit is not None:
            self._d.move_to_end(key)
            return hit
        wm = map_windows(c, spec, backend)
        self._d[key] = wm
        if len(self._d) > self.maxsize:
            self._d.popitem(last=False)
        return wm


def _channel_coord(ci: int, n: int) -> float:
    return ci / max(1, n - 1)


class _ContBase(Module):
    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        spec: FilterSpec,
        kernels,
        strategy: str = "independent2d",
        bias: bool = False,
        backend: str = "grid",
    ):
        if strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {strategy!r}")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self._spec = spec
        self._strategy = strategy
        self._backend = backend
        want_in = spec.dims + (strategy == "shared3d")
        if strategy == "independent2d":
            kernels = [list(row) for row in kernels]
            if len(kernels) != out_channels or any(len(r) != in_channels for r in kernels):
                raise DimensionError(
                    f"independent2d needs {out_channels}x{in_channels} kernels"
                )
            flat = [k for row in kernels for k in row]
        else:
            kernels = list(kernels)
            if len(kernels) != out_channels:
                raise DimensionError(f"shared3d needs {out_channels} kernels, got {len(kernels)}")
            flat = kernels
        for k in flat:
            if k.n_in != want_in:
                raise DimensionError(f"kernel takes {k.n_in} inputs, {strategy} needs {want_in}")
        self.kernels = kernels
        self.bias = Tensor(np.zeros(out_channels), requires_grad=True) if bias else None
        self._cache = _MapCache()

    @property
    def spec(self) -> FilterSpec:
        return self._spec

    @property
    def strategy(self) -> str:
        return self._strategy

    def window_map(self, coords: np.ndarray) -> WindowMap:
        return self._cache.get(coords, self._spec, self._backend)

    def _kernel_weights(self, local: np.ndarray, n_in: int, n_out: int) -> list[tuple[int, int, Tensor]]:
        """Kernel samples per (out, in) channel pair, each (M, 1)."""
        out = []
        if self._strategy == "independent2d":
            for co in range(n_out):
                for ci in range(n_in):
                    out.append((co, ci, self.kernels[co][ci](local)))
            return out
        m = len(local)
        feats = np.concatenate(
            [np.column_stack([local, np.full(m, _channel_coord(ci, n_in))]) for ci in range(n_in)]
        )
        for co in range(n_out):
            vals = self.kernels[co](feats)
            for ci in range(n_in):
                out.append((co, ci, T.slice(vals, np.s_[ci * m : (ci + 1) * m])))
        return out

    def config_records(self, prefix: str) -> dict[str, np.ndarray]:
        return {
            f"{prefix}config.filter_size": self._spec.size,
            f"{prefix}config.strides": self._spec.strides.origins,
            f"{prefix}config.channels": np.array([self.in_channels, self.out_channels]),
            f"{prefix}config.strategy": np.array(STRATEGIES.index(self._strategy)),
        }


class ContConv(_ContBase):
    """Continuous convolution: point field (B, N, C_in) -> window samples (B, S', C_out).

    ``empty_policy='drop'`` removes windows containing no points (so S' may be
    smaller than the stride count); ``'zero'`` keeps them with value 0.
    ``normalize`` divides each window sum by its point count.
    """

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        spec: FilterSpec,
        kernels,
        strategy: str = "independent2d",
        empty_policy: str = "drop",
        bias: bool = False,
        normalize: bool = False,
        backend: str = "grid",
    ):
        super().__init__(in_channels, out_channels, spec, kernels, strategy, bias, backend)
        if empty_policy not in EMPTY_POLICIES:
            raise ValueError(f"unknown empty-window policy {empty_policy!r}")
        self._empty_policy = empty_policy
        self._normalize = normalize

    def output_windows(self, coords: np.ndarray) -> np.ndarray:
        """Indices of the stride windows that produce an output row."""
        wm = self.window_map(coords)
        if self._empty_policy == "drop":
            return np.flatnonzero(wm.counts > 0)
        return np.arange(len(self._spec.strides))

    def output_coords(self, coords: np.ndarray) -> np.ndarray:
        return self._spec.centroids()[self.output_windows(coords)]

    def forward(self, coords: np.ndarray, values) -> Tensor:
        values = T.tensor(values)
        if values.ndim == 2:
            values = T.reshape(values, (1,) + values.shape)
        if values.ndim != 3 or values.shape[2] != self.in_channels:
            raise DimensionError(
                f"ContConv expects (B, N, {self.in_channels}) values, got {values.shape}"
            )
        if len(self._spec.strides) == 0:
            raise ContractError("empty stride set")
        b, n, cin = values.shape
        if n != len(coords):
            raise DimensionError(f"{n} value rows for {len(coords)} coordinates")
        cout = self.out_channels
        wm = self.window_map(coords)
        keep = self.output_windows(coords)
        renum = np.full(len(self._spec.strides), -1, dtype=np.intp)
        renum[keep] = np.arange(len(keep))
        win = renum[wm.window]
        rows, cols, ws = [], [], []
        for co, ci, k in self._kernel_weights(wm.local, cin, cout):
            rows.append(win * cout + co)
            cols.append(wm.point * cin + ci)
            ws.append(k)
        weights = T.reshape(T.concat(ws, axis=0), (-1,))
        if self._normalize:
            inv = 1.0 / wm.counts[wm.window]
            weights = T.mul(weights, np.tile(inv, cin * cout))
        x = T.reshape(values, (b, n * cin))
        out = T.window_matmul(x, weights, np.concatenate(rows), np.concatenate(cols), len(keep) * cout)
        out = T.reshape(out, (b, len(keep), cout))
        if self.bias is not None:
            out = T.bias_add(out, self.bias)
        return out

    def config_records(self, prefix: str) -> dict[str, np.ndarray]:
        rec = super().config_records(prefix)
        rec[f"{prefix}config.empty_policy"] = np.array(EMPTY_POLICIES.index(self._empty_policy))
        rec[f"{prefix}config.normalize"] = np.array(float(self._normalize))
        return rec


class ContConvTranspose(_ContBase):
    """Transposed continuous convolution: latent (B, S, C_in) -> points (B, M, C_out).

    Each latent value scales the kernel sampled at the output points inside
    its window; overlapping windows are summed (or averaged with
    ``overlap='mean'``). Points covered by no window receive 0.
    """

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        spec: FilterSpec,
        kernels,
        strategy: str = "independent2d",
        overlap: str = "sum",
        bias: bool = False,
        backend: str = "grid",
    ):
        super().__init__(in_channels, out_channels, spec, kernels, strategy, bias, backend)
        if overlap not in OVERLAP_POLICIES:
            raise ValueError(f"unknown overlap policy {overlap!r}")
        self._overlap = overlap

    def forward(self, latent, out_coords: np.ndarray) -> Tensor:
        latent = T.tensor(latent)
        if latent.ndim == 2:
            latent = T.reshape(latent, (1,) + latent.shape)
        s = len(self._spec.strides)
        if latent.ndim != 3 or latent.shape[1:] != (s, self.in_channels):
            raise DimensionError(
                f"ContConvTranspose expects (B, {s}, {self.in_channels}) latent, got {latent.shape}"
            )
        b = latent.shape[0]
        cin, cout = self.in_channels, self.out_channels
        wm = self.window_map(out_coords)
        m = wm.n_points
        rows, cols, ws = [], [], []
        for co, ci, k in self._kernel_weights(wm.local, cin, cout):
            rows.append(wm.point * cout + co)
            cols.append(wm.window * cin + ci)
            ws.append(k)
        weights = T.reshape(T.concat(ws, axis=0), (-1,)) if ws else Tensor(np.zeros(0))
        if self._overlap == "mean" and len(wm.point):
            cover = np.bincount(wm.point, minlength=m)
            weights = T.mul(weights, np.tile(1.0 / cover[wm.point], cin * cout))
        x = T.reshape(latent, (b, s * cin))
        out = T.window_matmul(x, weights, np.concatenate(rows), np.concatenate(cols), m * cout)
        out = T.reshape(out, (b, m, cout))
        if self.bias is not None:
            out = T.bias_add(out, self.bias)
        return out

    def config_records(self, prefix: str) -> dict[str, np.ndarray]:
        rec = super().config_records(prefix)
        rec[f"{prefix}config.overlap"] = np.array(OVERLAP_POLICIES.index(self._overlap))
        return rec


def cont_conv_forward(layer: ContConv, field: PointField) -> PointField:
    """Apply ``layer`` to one point field; output points are window centroids."""
    with T.no_grad():
        out = layer(field.coords, field.values)
    return PointField(layer.output_coords(field.coords), out.data[0])


def cont_conv_transpose_forward(layer: ContConvTranspose, latent, out_coords) -> PointField:
    with T.no_grad():
        out = layer(latent, out_coords)
    return PointField(out_coords, out.data[0])


def kernel_grid(out_channels: int, in_channels: int, make: Callable[[int, int], Module]):
    """``make(co, ci)`` for every channel pair, as the nested list ContConv expects."""
    return [[make(co, ci) for ci in range(in_channels)] for co in range(out_channels)]


def same_kernels(kernel: Module, shape: Sequence[int]):
    return [[kernel] * shape[1] for _ in range(shape[0])]
