"""Plain reference implementations used as ground truth.

``discrete_conv`` / ``discrete_conv_transpose`` are loop-based valid-mode
cross-correlation and its stamping transpose. ``pod_fit`` / ``pod_predict``
form the POD + Gaussian-RBF reduced-order baseline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import ContractError

__all__ = [
    "discrete_conv",
    "discrete_conv_transpose",
    "PodModel",
    "GaussianRbf",
    "pod_fit",
    "pod_predict",
    "CONV_FIXTURE_IMAGE",
    "CONV_FIXTURE_KERNEL",
    "CONV_FIXTURE_OUTPUT",
    "TRANSPOSE_FIXTURE_INPUT",
    "TRANSPOSE_FIXTURE_KERNEL",
    "TRANSPOSE_FIXTURE_OUTPUT",
]


def discrete_conv(img, kernel, stride: int = 1) -> np.ndarray:
    """Valid-mode 2-D cross-correlation (no padding, no kernel flip)."""
    img = np.asarray(img, dtype=np.float64)
    k = np.asarray(kernel, dtype=np.float64)
    h, w = img.shape
    kh, kw = k.shape
    if kh > h or kw > w:
        raise ContractError(f"kernel {k.shape} larger than image {img.shape}")
    if stride < 1:
        raise ContractError("stride must be >= 1")
    oh = (h - kh) // stride + 1
    ow = (w - kw) // stride + 1
    out = np.zeros((oh, ow))
    for a in range(oh):
        for b in range(ow):
            acc = 0.0
            for u in range(kh):
                for v in range(kw):
                    acc += img[a * stride + u, b * stride + v] * k[u, v]
            out[a, b] = acc
    return out


def discrete_conv_transpose(x, kernel, stride: int = 1) -> np.ndarray:
    """Stamp ``x[a, b] * kernel`` at offset ``(a, b) * stride``; overlaps are summed."""
    x = np.asarray(x, dtype=np.float64)
    k = np.asarray(kernel, dtype=np.float64)
    h, w = x.shape
    kh, kw = k.shape
    out = np.zeros(((h - 1) * stride + kh, (w - 1) * stride + kw))
    for a in range(h):
        for b in range(w):
            out[a * stride : a * stride + kh, b * stride : b * stride + kw] += x[a, b] * k
    return out


# worked examples for a binary image and a 2x2 transposed stamp
CONV_FIXTURE_IMAGE = np.array(
    [
        [0, 1, 1, 1, 0, 0, 0],
        [0, 0, 1, 1, 1, 0, 0],
        [0, 0, 0, 1, 1, 1, 0],
        [0, 0, 0, 1, 1, 0, 0],
        [0, 0, 1, 1, 0, 0, 0],
        [0, 1, 1, 0, 0, 0, 0],
        [1, 1, 0, 0, 0, 0, 0],
    ],
    dtype=np.float64,
)
CONV_FIXTURE_KERNEL = np.array([[1, 0, 1], [0, 1, 0], [1, 0, 1]], dtype=np.float64)
CONV_FIXTURE_OUTPUT = np.array(
    [
        [1, 4, 3, 4, 1],
        [1, 2, 4, 3, 3],
        [1, 2, 3, 4, 1],
        [1, 3, 3, 1, 1],
        [3, 3, 1, 1, 0],
    ],
    dtype=np.float64,
)
TRANSPOSE_FIXTURE_INPUT = np.array([[0, 1], [2, 3]], dtype=np.float64)
TRANSPOSE_FIXTURE_KERNEL = np.array([[0, 1], [2, 3]], dtype=np.float64)
TRANSPOSE_FIXTURE_OUTPUT = np.array([[0, 0, 1], [0, 4, 6], [4, 12, 9]], dtype=np.float64)


# -- POD + RBF ------------------------------------------------------------------------
@dataclass
class GaussianRbf:
    """Gaussian RBF interpolant ``f(t) = sum_i w_i exp(-((t - c_i) / width)^2)``."""

    centers: np.ndarray
    width: float
    weights: np.ndarray  # (n_centers, n_outputs)

    @classmethod
    def fit(cls, centers, values, ridge: float = 1e-10) -> GaussianRbf:
        c = np.asarray(centers, dtype=np.float64).reshape(-1)
        y = np.asarray(values, dtype=np.float64).reshape(len(c), -1)
        if len(c) > 1:
            d = np.abs(c[:, None] - c[None, :])[np.triu_indices(len(c), 1)]
            width = float(np.median(d))
        else:
            width = 1.0
        phi = np.exp(-(((c[:, None] - c[None, :]) / width) ** 2))
        w = np.linalg.solve(phi + ridge * np.eye(len(c)), y)
        return cls(c, width, w)

    def __call__(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
        phi = np.exp(-(((t[:, None] - self.centers[None, :]) / self.width) ** 2))
        return phi @ self.weights


@dataclass
class PodModel:
    mean: np.ndarray  # (N,)
    modes: np.ndarray  # (N, r) orthonormal columns
    singular_values: np.ndarray  # all singular values of the centred snapshot matrix
    times: np.ndarray
    coefficients: np.ndarray  # (n_snapshots, r)
    rbf: GaussianRbf | None

    @property
    def rank(self) -> int:
        return self.modes.shape[1]

    def project(self, snapshots: np.ndarray) -> np.ndarray:
        """Rank-r reconstruction of column snapshots (N, k)."""
        xc = snapshots - self.mean[:, None]
        return self.mean[:, None] + self.modes @ (self.modes.T @ xc)


def pod_fit(snapshots, times, r: int, center: bool = True, rank_tol: float = 1e-7) -> PodModel:
    """Method of snapshots on an (N, n) matrix with one snapshot per column.

    Eigen-decomposes the n x n Gram matrix, lifts eigenvectors to spatial
    modes, and re-orthonormalises them with one QR pass. Directions whose
    singular value is below ``rank_tol * sigma_max`` are discarded, so the
    returned rank can be smaller than ``r`` on rank-deficient data.
    """
    x = np.asarray(snapshots, dtype=np.float64)
    times = np.asarray(times, dtype=np.float64).reshape(-1)
    n_space, n = x.shape
    if len(times) != n:
        raise ContractError(f"{len(times)} times for {n} snapshots")
    if r < 0 or r > min(n_space, n):
        raise ContractError(f"rank {r} exceeds min(N={n_space}, snapshots={n})")
    mean = x.mean(axis=1) if center else np.zeros(n_space)
    xc = x - mean[:, None]
    gram = xc.T @ xc
    lam, vec = np.linalg.eigh(gram)
    order = np.argsort(lam)[::-1]
    lam, vec = np.clip(lam[order], 0.0, None), vec[:, order]
    sigma = np.sqrt(lam)
    smax = sigma[0] if len(sigma) else 0.0
    keep = min(r, int(np.count_nonzero(sigma > rank_tol * smax))) if smax > 0 else 0
    if keep:
        modes = xc @ vec[:, :keep] / sigma[:keep]
        q, rr = np.linalg.qr(modes)
        modes = q * np.sign(np.diag(rr))
    else:
        modes = np.zeros((n_space, 0))
    coeffs = (modes.T @ xc).T
    rbf = GaussianRbf.fit(times, coeffs) if keep else None
    return PodModel(mean, modes, sigma, times, coeffs, rbf)


def pod_predict(model: PodModel, t) -> np.ndarray:
    """Predicted snapshot(s) at time(s) ``t``; shape (N,) for scalar t, else (N, k)."""
    scalar = np.ndim(t) == 0
    tt = np.atleast_1d(np.asarray(t, dtype=np.float64))
    if model.rbf is None:
        out = np.repeat(model.mean[:, None], len(tt), axis=1)
    else:
        out = model.mean[:, None] + model.modes @ model.rbf(tt).T
    return out[:, 0] if scalar else out
