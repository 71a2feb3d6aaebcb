"""Trainable continuous convolution for functions sampled on unstructured point sets."""

from .conv import (
    ContConv,
    ContConvTranspose,
    FilterSpec,
    Learned,
    StrideSet,
    Tabulated,
    cont_conv_forward,
    cont_conv_transpose_forward,
    gen_stride_grid,
)
from .pointfield import PointField, SnapshotSeries, bed_of_nails, drop_pixels, to_image
from .tensor import ContractError, DimensionError, Tensor

__version__ = "0.1.0"

__all__ = [
    "ContConv",
    "ContConvTranspose",
    "FilterSpec",
    "Learned",
    "StrideSet",
    "Tabulated",
    "cont_conv_forward",
    "cont_conv_transpose_forward",
    "gen_stride_grid",
    "PointField",
    "SnapshotSeries",
    "bed_of_nails",
    "drop_pixels",
    "to_image",
    "ContractError",
    "DimensionError",
    "Tensor",
]
