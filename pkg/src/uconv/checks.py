"""Bridges between the continuous layers and the discrete oracles.

An image becomes a bed-of-nails point field; with a tabulated kernel that
reproduces the discrete weights, the continuous layers must agree with the
loop-based oracles exactly.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .conv import ContConv, ContConvTranspose, FilterSpec, StrideSet, Tabulated, gen_stride_grid
from .oracles import (
    CONV_FIXTURE_IMAGE,
    CONV_FIXTURE_KERNEL,
    CONV_FIXTURE_OUTPUT,
    TRANSPOSE_FIXTURE_INPUT,
    TRANSPOSE_FIXTURE_KERNEL,
    TRANSPOSE_FIXTURE_OUTPUT,
    discrete_conv,
    discrete_conv_transpose,
)
from .pointfield import bed_of_nails

__all__ = ["continuous_conv_image", "continuous_transpose_image", "fixture_checks"]


def continuous_conv_image(img, kernel, stride: int = 1, backend: str = "grid") -> np.ndarray:
    """Discrete valid-mode convolution computed by the continuous layer."""
    img = np.asarray(img, dtype=np.float64)
    k = np.asarray(kernel, dtype=np.float64)
    h, w = img.shape
    oh, ow = (h - k.shape[0]) // stride + 1, (w - k.shape[1]) // stride + 1
    strides = StrideSet.regular([0.0, 0.0], [stride, stride], [oh, ow])
    layer = ContConv(1, 1, FilterSpec(k.shape, strides), [[Tabulated.from_grid(k)]],
                     empty_policy="zero", backend=backend)
    pf = bed_of_nails(img)
    with T.no_grad():
        out = layer(pf.coords, pf.values[None])
    return out.data[0, :, 0].reshape(oh, ow)


def continuous_transpose_image(x, kernel, stride: int = 1) -> np.ndarray:
    """Discrete transposed convolution computed by the transposed continuous layer."""
    x = np.asarray(x, dtype=np.float64)
    k = np.asarray(kernel, dtype=np.float64)
    h, w = x.shape
    oh, ow = (h - 1) * stride + k.shape[0], (w - 1) * stride + k.shape[1]
    strides = StrideSet.regular([0.0, 0.0], [stride, stride], [h, w])
    layer = ContConvTranspose(1, 1, FilterSpec(k.shape, strides), [[Tabulated.from_grid(k)]])
    coords = bed_of_nails(np.zeros((oh, ow))).coords
    with T.no_grad():
        out = layer(x.reshape(1, -1, 1), coords)
    return out.data[0, :, 0].reshape(oh, ow)


def fixture_checks() -> dict[str, tuple[bool, float]]:
    """Worked examples: name -> (passed, max abs deviation)."""
    res = {}
    for name, got, want in [
        ("conv_fixture_oracle", discrete_conv(CONV_FIXTURE_IMAGE, CONV_FIXTURE_KERNEL), CONV_FIXTURE_OUTPUT),
        ("conv_fixture_continuous", continuous_conv_image(CONV_FIXTURE_IMAGE, CONV_FIXTURE_KERNEL), CONV_FIXTURE_OUTPUT),
        ("transpose_fixture_oracle", discrete_conv_transpose(TRANSPOSE_FIXTURE_INPUT, TRANSPOSE_FIXTURE_KERNEL), TRANSPOSE_FIXTURE_OUTPUT),
        ("transpose_fixture_continuous", continuous_transpose_image(TRANSPOSE_FIXTURE_INPUT, TRANSPOSE_FIXTURE_KERNEL), TRANSPOSE_FIXTURE_OUTPUT),
    ]:
        dev = float(np.max(np.abs(got - want)))
        res[name] = (dev == 0.0, dev)
    centroids = FilterSpec(CONV_FIXTURE_KERNEL.shape, gen_stride_grid([0, 0], [7, 7], 3, 1)).centroids()
    dev = float(abs(centroids[0] - 1.5).max())
    res["conv_fixture_centroid"] = (dev == 0.0, dev)
    return res
