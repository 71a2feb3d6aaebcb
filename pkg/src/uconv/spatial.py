"""Point-in-window queries: which cloud points fall inside a filter box.

Windows are half-open boxes ``[origin, origin + size)`` on every axis, so a
point on a face shared by two adjacent windows belongs to exactly one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import ContractError

__all__ = ["WindowQuery", "GridIndex", "build_grid", "map_window", "linear_query"]


@dataclass(frozen=True)
class WindowQuery:
    origin: np.ndarray
    size: np.ndarray

    def __post_init__(self):
        origin = np.asarray(self.origin, dtype=np.float64).reshape(-1)
        size = np.asarray(self.size, dtype=np.float64).reshape(-1)
        if origin.shape != size.shape:
            raise ContractError(f"origin {origin.shape} and size {size.shape} differ in dimension")
        if np.any(size <= 0):
            raise ContractError(f"window extents must be positive, got {size}")
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "size", size)


def _inside(coords: np.ndarray, origin: np.ndarray, upper: np.ndarray) -> np.ndarray:
    return np.all((coords >= origin) & (coords < upper), axis=1)


def linear_query(coords: np.ndarray, q: WindowQuery) -> np.ndarray:
    return np.flatnonzero(_inside(coords, q.origin, q.origin + q.size))


@dataclass(frozen=True)
class GridIndex:
    """Uniform bucket grid over a cloud's bounding box.

    Buckets are stored CSR-style: ``order[starts[c]:starts[c + 1]]`` holds the
    point indices of flattened cell ``c``.
    """

    lo: np.ndarray
    cell: np.ndarray
    shape: tuple[int, ...]
    order: np.ndarray
    starts: np.ndarray
    coords: np.ndarray

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.shape))

    def bucket(self, c: int) -> np.ndarray:
        return self.order[self.starts[c] : self.starts[c + 1]]

    def nonempty_buckets(self) -> int:
        return int(np.count_nonzero(np.diff(self.starts)))

    def cell_of(self, points: np.ndarray) -> np.ndarray:
        ijk = np.floor((points - self.lo) / self.cell).astype(np.int64)
        return np.clip(ijk, 0, np.array(self.shape) - 1)

    def query(self, q: WindowQuery) -> np.ndarray:
        upper = q.origin + q.size
        dims = np.array(self.shape)
        # clip in float space so far-away windows cannot overflow the cast
        a = np.clip(np.floor((q.origin - self.lo) / self.cell), -1, dims).astype(np.int64)
        b = np.clip(np.floor((upper - self.lo) / self.cell), -1, dims).astype(np.int64)
        if np.any(b < 0) or np.any(a > dims - 1):
            return np.empty(0, dtype=np.intp)
        a = np.clip(a, 0, dims - 1)
        b = np.clip(b, 0, dims - 1)
        ranges = [np.arange(lo, hi + 1) for lo, hi in zip(a, b)]
        cells = np.ravel_multi_index(np.meshgrid(*ranges, indexing="ij"), self.shape).ravel()
        cand = np.concatenate([self.bucket(c) for c in cells]) if len(cells) else np.empty(0, np.intp)
        hit = cand[_inside(self.coords[cand], q.origin, upper)]
        return np.sort(hit)


def build_grid(coords: np.ndarray, target_per_cell: int = 4) -> GridIndex:
    """Bucket ``coords`` so that cells hold about ``target_per_cell`` points.

    Axes with zero extent get a single cell and are left out of the
    cell-size computation (the grid degenerates to one axis fewer).
    """
    coords = np.asarray(coords, dtype=np.float64)
    n, d = coords.shape
    if n < 1:
        raise ContractError("cannot index an empty cloud")
    if target_per_cell < 1:
        raise ContractError("target_per_cell must be >= 1")
    lo = coords.min(axis=0)
    extent = coords.max(axis=0) - lo
    live = extent > 0
    cell = np.ones(d)
    shape = np.ones(d, dtype=np.int64)
    if live.any():
        k = int(live.sum())
        # log space: tiny or huge extents must not under/overflow the volume
        log_side = (np.log(extent[live]).sum() + np.log(target_per_cell / n)) / k
        counts = np.clip(np.ceil(extent[live] / np.exp(log_side)), 1, n).astype(np.int64)
        shape[live] = counts
        # widen slightly so the max point lands inside the last cell
        cell[live] = extent[live] / counts * (1.0 + 1e-12)
    cell_ids = np.ravel_multi_index(
        tuple(np.clip(np.floor((coords - lo) / cell).astype(np.int64), 0, shape - 1).T),
        tuple(shape),
    )
    order = np.argsort(cell_ids, kind="stable")
    starts = np.searchsorted(cell_ids[order], np.arange(int(np.prod(shape)) + 1))
    return GridIndex(lo, cell, tuple(int(s) for s in shape), order, starts, coords)


def map_window(coords, q: WindowQuery, backend: str = "linear", index: GridIndex | None = None):
    """Points of ``coords`` inside ``q`` and their filter-local coordinates.

    Returns ``(indices, local)`` where ``local = (x - origin) / size`` lies in
    ``[0, 1)`` per axis. Indices are sorted ascending for both backends.
    """
    coords = np.asarray(coords, dtype=np.float64)
    if backend == "linear":
        idx = linear_query(coords, q)
    elif backend == "grid":
        if index is None:
            index = build_grid(coords)
        idx = index.query(q)
    else:
        raise ValueError(f"unknown backend {backend!r}")
    return idx, (coords[idx] - q.origin) / q.size
