"""IDX (MNIST) file reading and writing."""

from __future__ import annotations

import gzip
import struct
from pathlib import Path

import numpy as np

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801

MNIST_FILES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}

DOWNLOAD_HINT = (
    "MNIST files are not downloaded automatically; fetch the four IDX files "
    "(train-images-idx3-ubyte, train-labels-idx1-ubyte, t10k-images-idx3-ubyte, "
    "t10k-labels-idx1-ubyte, optionally .gz) from a MNIST mirror into one directory "
    "and point `mnist_dir` at it"
)


class IdxFormatError(ValueError):
    pass


def _read_bytes(path) -> bytes:
    path = Path(path)
    if not path.exists() and Path(str(path) + ".gz").exists():
        path = Path(str(path) + ".gz")
    raw = path.read_bytes()
    return gzip.decompress(raw) if path.suffix == ".gz" else raw


def parse_images(buf: bytes, limit: int | None = None) -> np.ndarray:
    if len(buf) < 16:
        raise IdxFormatError("truncated image header")
    magic, count, rows, cols = struct.unpack_from(">IIII", buf, 0)
    if magic != IMAGES_MAGIC:
        raise IdxFormatError(f"bad image magic 0x{magic:08x}")
    n = count if limit is None else min(count, limit)
    need = 16 + n * rows * cols
    if len(buf) < need:
        raise IdxFormatError(f"truncated image payload: {len(buf)} < {need} bytes")
    px = np.frombuffer(buf, dtype=np.uint8, count=n * rows * cols, offset=16)
    return px.reshape(n, rows, cols).astype(np.float64) / 255.0


def parse_labels(buf: bytes, limit: int | None = None) -> np.ndarray:
    if len(buf) < 8:
        raise IdxFormatError("truncated label header")
    magic, count = struct.unpack_from(">II", buf, 0)
    if magic != LABELS_MAGIC:
        raise IdxFormatError(f"bad label magic 0x{magic:08x}")
    n = count if limit is None else min(count, limit)
    if len(buf) < 8 + n:
        raise IdxFormatError(f"truncated label payload: {len(buf)} < {8 + n} bytes")
    return np.frombuffer(buf, dtype=np.uint8, count=n, offset=8).astype(np.int64)


def image_header(path) -> tuple[int, int, int]:
    buf = _read_bytes(path)[:16]
    if len(buf) < 16:
        raise IdxFormatError("truncated image header")
    magic, count, rows, cols = struct.unpack(">IIII", buf)
    if magic != IMAGES_MAGIC:
        raise IdxFormatError(f"bad image magic 0x{magic:08x}")
    return count, rows, cols


def load_mnist(images_path, labels_path, limit: int | None = None):
    """Return ``(images, labels)``: (n, 28, 28) floats in [0, 1] and int labels."""
    images = parse_images(_read_bytes(images_path), limit)
    labels = parse_labels(_read_bytes(labels_path), limit)
    if len(images) != len(labels):
        raise IdxFormatError(f"{len(images)} images but {len(labels)} labels")
    return images, labels


def mnist_paths(directory) -> dict[str, Path]:
    directory = Path(directory)
    return {k: directory / v for k, v in MNIST_FILES.items()}


def mnist_available(directory) -> bool:
    if directory is None:
        return False
    return all(p.exists() or Path(str(p) + ".gz").exists() for p in mnist_paths(directory).values())


def write_images(path, images: np.ndarray) -> None:
    """Write uint8-valued images (n, rows, cols) as an IDX3 file."""
    a = np.asarray(images)
    if a.dtype != np.uint8:
        a = np.clip(np.rint(a * 255.0), 0, 255).astype(np.uint8)
    n, r, c = a.shape
    Path(path).write_bytes(struct.pack(">IIII", IMAGES_MAGIC, n, r, c) + a.tobytes())


def write_labels(path, labels) -> None:
    a = np.asarray(labels, dtype=np.uint8)
    Path(path).write_bytes(struct.pack(">II", LABELS_MAGIC, len(a)) + a.tobytes())
