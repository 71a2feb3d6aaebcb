"""Synthetic parametric fields on unstructured clouds.

``bump_flow``: a channel velocity profile over a back-step domain. Upstream of
the step the profile is the parabola ``mu * (y - a)(b - y) / ((b - a) / 2)^2``
with a = step height, b = channel top; downstream the lower edge of the jet
relaxes towards the floor over a length that grows with ``mu``, with the
peak rescaled so the flux is conserved. Values below the jet are zero.

``traveling_wave``: a volume-fraction step ``sigmoid(k (x - c t - x0 - A sin(2 pi y / L)))``
whose interface moves with speed ``c``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .nn import make_rng
from .pointfield import PointField, SnapshotSeries
from .tensor import ContractError

__all__ = [
    "CloudSpec",
    "sample_cloud",
    "backstep_cloud",
    "bump_flow_values",
    "traveling_wave_values",
    "gen_parametric_field",
    "bump_flow_family",
]


@dataclass(frozen=True)
class CloudSpec:
    lo: tuple[float, float]
    hi: tuple[float, float]
    n: int
    sampler: str = "uniform_random"
    holes: tuple[tuple[tuple[float, float], tuple[float, float]], ...] = field(default_factory=tuple)

    def contains(self, pts: np.ndarray) -> np.ndarray:
        ok = np.all((pts >= self.lo) & (pts < self.hi), axis=1)
        for hlo, hhi in self.holes:
            ok &= ~np.all((pts >= hlo) & (pts < hhi), axis=1)
        return ok


def sample_cloud(spec: CloudSpec, seed: int) -> np.ndarray:
    """``spec.n`` points inside the box minus its holes, sorted lexicographically."""
    if spec.n <= 0:
        raise ContractError(f"point count must be positive, got {spec.n}")
    lo, hi = np.asarray(spec.lo, float), np.asarray(spec.hi, float)
    if spec.sampler == "uniform_random":
        rng = make_rng(seed)
        draw = lambda m: lo + (hi - lo) * rng.random((m, 2))  # noqa: E731
    elif spec.sampler == "halton":
        gen = qmc.Halton(d=2, scramble=True, seed=make_rng(seed))
        draw = lambda m: lo + (hi - lo) * gen.random(m)  # noqa: E731
    else:
        raise ValueError(f"unknown sampler {spec.sampler!r}")
    pts = np.empty((0, 2))
    while len(pts) < spec.n:
        cand = draw(2 * spec.n)
        pts = np.concatenate([pts, cand[spec.contains(cand)]])
    pts = pts[: spec.n]
    return pts[np.lexsort(pts.T[::-1])]


# back-step geometry: channel [0, 10] x [0, 5] with the step [0, 3) x [0, 2) removed
BACKSTEP = dict(length=10.0, height=5.0, step_x=3.0, step_y=2.0)


def backstep_cloud(n: int, seed: int, sampler: str = "halton") -> np.ndarray:
    g = BACKSTEP
    spec = CloudSpec(
        (0.0, 0.0),
        (g["length"], g["height"]),
        n,
        sampler,
        holes=(((0.0, 0.0), (g["step_x"], g["step_y"])),),
    )
    return sample_cloud(spec, seed)


def bump_flow_values(coords: np.ndarray, mu: float, relax: float = 0.02) -> np.ndarray:
    """Closed-form bump-flow field at ``coords`` for inlet amplitude ``mu``."""
    g = BACKSTEP
    x, y = coords[:, 0], coords[:, 1]
    b = g["height"]
    length = 0.5 + relax * mu * g["step_x"]
    a = np.where(x < g["step_x"], g["step_y"], g["step_y"] * np.exp(-(x - g["step_x"]) / length))
    width0 = b - g["step_y"]
    width = b - a
    shape = np.clip((y - a) * (b - y), 0.0, None) / (width / 2.0) ** 2
    return mu * (width0 / width) * shape


def traveling_wave_values(
    coords: np.ndarray, t: float, c: float = 4.0, k: float = 10.0, x0: float = 1.0,
    amplitude: float = 0.0, wavelength: float = 2.0,
) -> np.ndarray:
    x, y = coords[:, 0], coords[:, 1]
    front = x0 + c * t + amplitude * np.sin(2.0 * np.pi * y / wavelength)
    z = k * (x - front)
    return 0.5 * (1.0 + np.tanh(0.5 * z))  # = sigmoid(z), overflow-free


def gen_parametric_field(kind: str, params: dict, cloud: CloudSpec | np.ndarray, seed: int = 0):
    """Generate one synthetic field (``bump_flow``) or a snapshot series (``traveling_wave``).

    ``cloud`` is either explicit coordinates or a :class:`CloudSpec`.
    """
    coords = cloud if isinstance(cloud, np.ndarray) else sample_cloud(cloud, seed)
    if len(coords) == 0:
        raise ContractError("point count must be positive")
    if kind == "bump_flow":
        return PointField(coords, bump_flow_values(coords, float(params.get("mu", 1.0)),
                                                   float(params.get("relax", 0.02))))
    if kind == "traveling_wave":
        n_t = int(params.get("n_times", 200))
        t_end = float(params.get("t_end", 1.0))
        times = np.linspace(0.0, t_end, n_t)
        wave = {k: float(params[k]) for k in ("c", "k", "x0", "amplitude", "wavelength") if k in params}
        vals = np.stack([traveling_wave_values(coords, t, **wave)[:, None] for t in times])
        return SnapshotSeries(coords, times, vals)
    raise ValueError(f"unknown field kind {kind!r}")


def bump_flow_family(n_samples: int, n_points: int, seed: int, mu_range=(1.0, 80.0)):
    """``n_samples`` bump-flow fields on one shared back-step cloud.

    Returns ``(coords, mus, values)`` with values of shape (n_samples, N, 1).
    """
    coords = backstep_cloud(n_points, seed)
    mus = make_rng(seed + 1).uniform(*mu_range, size=n_samples)
    values = np.stack([bump_flow_values(coords, m)[:, None] for m in mus])
    return coords, mus, values
