"""Functions sampled on unstructured 2-D point sets.

A :class:`PointField` is N coordinate rows plus N x C channel values. Images
enter through :func:`bed_of_nails` (pixel (row i, col j) becomes the point
(x=i, y=j)) and leave through :func:`to_image`.
"""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .nn import make_rng
from .tensor import ContractError, DimensionError

__all__ = [
    "PointField",
    "SnapshotSeries",
    "bed_of_nails",
    "to_image",
    "drop_pixels",
    "write_pointfield",
    "read_pointfield",
    "write_series",
    "read_series",
]

_HEADER = re.compile(r"#\s*uconv-pointfield v1 dims=(\d+) channels=(\d+) n=(\d+)\s*$")


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class PointField:
    coords: np.ndarray  # (N, d)
    values: np.ndarray  # (N, C)

    def __post_init__(self):
        coords = _frozen(self.coords)
        values = _frozen(self.values)
        if coords.ndim != 2:
            raise DimensionError(f"coords must be (N, d), got {coords.shape}")
        if values.ndim == 1:
            values = _frozen(values[:, None])
        if values.ndim != 2 or values.shape[0] != coords.shape[0]:
            raise DimensionError(f"values {values.shape} do not match coords {coords.shape}")
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    @property
    def dims(self) -> int:
        return self.coords.shape[1]

    @property
    def channels(self) -> int:
        return self.values.shape[1]

    def subset(self, idx) -> PointField:
        idx = np.asarray(idx, dtype=np.intp)
        return PointField(self.coords[idx], self.values[idx])

    def with_values(self, values) -> PointField:
        return PointField(self.coords, values)

    def check_distinct(self, tol: float = 1e-12) -> None:
        """Raise if two coordinate rows coincide within ``tol``."""
        if self.n < 2:
            return
        order = np.lexsort(self.coords.T[::-1])
        c = self.coords[order]
        close = np.all(np.abs(np.diff(c, axis=0)) <= tol, axis=1)
        if close.any():
            k = int(np.argmax(close))
            raise ContractError(f"duplicate coordinate {c[k]} in point field")

    def __eq__(self, other) -> bool:
        if not isinstance(other, PointField):
            return NotImplemented
        return np.array_equal(self.coords, other.coords) and np.array_equal(self.values, other.values)

    __hash__ = None


@dataclass(frozen=True)
class SnapshotSeries:
    coords: np.ndarray  # (N, d), shared by every snapshot
    times: np.ndarray  # (T,)
    values: np.ndarray  # (T, N, C)

    def __post_init__(self):
        coords = _frozen(self.coords)
        times = _frozen(self.times).reshape(-1)
        values = np.array(self.values, dtype=np.float64)
        if values.ndim == 2:
            values = values[:, :, None]
        values.setflags(write=False)
        if values.shape[:2] != (len(times), coords.shape[0]):
            raise DimensionError(
                f"snapshot block {values.shape} does not match {len(times)} times x {coords.shape[0]} points"
            )
        if np.any(np.diff(times) <= 0):
            raise ContractError("snapshot times must be strictly increasing")
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return len(self.times)

    def __getitem__(self, k: int) -> PointField:
        return PointField(self.coords, self.values[k])

    def matrix(self) -> np.ndarray:
        """Snapshot matrix with one flattened snapshot per column, (N*C, T)."""
        return self.values.reshape(len(self.times), -1).T


def bed_of_nails(img) -> PointField:
    """Image (H, W) or (C, H, W) to one point per pixel at (x=i, y=j)."""
    a = np.asarray(img, dtype=np.float64)
    if a.ndim == 2:
        a = a[None]
    if a.ndim != 3 or a.size == 0:
        raise DimensionError(f"expected a non-empty (C, H, W) image, got {np.shape(img)}")
    c, h, w = a.shape
    ii, jj = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    coords = np.stack([ii.ravel(), jj.ravel()], axis=1).astype(np.float64)
    return PointField(coords, a.reshape(c, h * w).T)


def to_image(pf: PointField, height: int, width: int, with_mask: bool = False):
    """Inverse of :func:`bed_of_nails`; absent pixels read 0 (see ``with_mask``)."""
    ij = np.rint(pf.coords).astype(np.int64)
    if pf.n and (not np.array_equal(ij, pf.coords) or pf.dims != 2):
        raise ContractError("to_image needs integer-valued 2-D coordinates")
    if pf.n and (ij.min() < 0 or ij[:, 0].max() >= height or ij[:, 1].max() >= width):
        raise ContractError(f"coordinates fall outside a {height}x{width} image")
    img = np.zeros((pf.channels, height, width))
    mask = np.zeros((height, width), dtype=bool)
    img[:, ij[:, 0], ij[:, 1]] = pf.values.T
    mask[ij[:, 0], ij[:, 1]] = True
    out = img[0] if pf.channels == 1 else img
    return (out, mask) if with_mask else out


def keep_indices(n: int, keep_percent: float, seed: int) -> np.ndarray:
    """Sorted indices of ceil(n * P / 100) points drawn without replacement.

    Partial Fisher-Yates: step i swaps slot i with a uniform slot in [i, n).
    """
    if not 0.0 <= keep_percent <= 100.0:
        raise ContractError(f"keep_percent must lie in [0, 100], got {keep_percent}")
    k = math.ceil(n * keep_percent / 100.0 - 1e-9)
    if k >= n:
        return np.arange(n)
    rng = make_rng(seed)
    draws = rng.integers(np.arange(k), n) if k else np.empty(0, dtype=np.int64)
    perm = np.arange(n)
    for i, j in enumerate(draws):
        perm[i], perm[j] = perm[j], perm[i]
    return np.sort(perm[:k])


def drop_pixels(pf: PointField, keep_percent: float, seed: int) -> PointField:
    """Keep a uniform random ``keep_percent`` of the points; the rest are removed."""
    return pf.subset(keep_indices(pf.n, keep_percent, seed))


# -- CSV i/o ------------------------------------------------------------------------
def write_pointfield(path, pf: PointField) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# uconv-pointfield v1 dims={pf.dims} channels={pf.channels} n={pf.n}\n")
        rows = np.concatenate([pf.coords, pf.values], axis=1)
        for row in rows:
            fh.write(",".join(format(v, ".17g") for v in row))
            fh.write("\n")


def read_pointfield(path) -> PointField:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
        m = _HEADER.match(header.strip())
        if not m:
            raise ValueError(f"{path}: not a uconv-pointfield v1 file")
        dims, channels, n = map(int, m.groups())
        rows = [line for line in fh if line.strip()]
    data = np.array([[float(v) for v in r.split(",")] for r in rows], dtype=np.float64)
    if n == 0:
        data = np.zeros((0, dims + channels))
    if data.shape != (n, dims + channels):
        raise ValueError(f"{path}: expected {n} rows of {dims + channels} columns, got {data.shape}")
    return PointField(data[:, :dims], data[:, dims:])


def write_series(manifest, series: SnapshotSeries, stem: str = "snap") -> list[Path]:
    """Write one point-field file per snapshot plus a ``t,filename`` manifest."""
    manifest = Path(manifest)
    manifest.parent.mkdir(parents=True, exist_ok=True)
    paths = []
    with open(manifest, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "filename"])
        for k, t in enumerate(series.times):
            name = f"{stem}_{k:05d}.csv"
            write_pointfield(manifest.parent / name, series[k])
            w.writerow([format(t, ".17g"), name])
            paths.append(manifest.parent / name)
    return paths


def read_series(manifest) -> SnapshotSeries:
    manifest = Path(manifest)
    with open(manifest, encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{manifest}: empty manifest")
    fields = [read_pointfield(manifest.parent / r["filename"]) for r in rows]
    coords = fields[0].coords
    for f in fields[1:]:
        if not np.array_equal(f.coords, coords):
            raise ValueError(f"{manifest}: snapshots do not share one coordinate set")
    return SnapshotSeries(coords, [float(r["t"]) for r in rows], np.stack([f.values for f in fields]))


def stack_values(fields: Sequence[PointField]) -> np.ndarray:
    """(B, N, C) value block for fields sharing one coordinate set."""
    return np.stack([f.values for f in fields])
