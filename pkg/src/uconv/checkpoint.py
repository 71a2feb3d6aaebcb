"""Binary checkpoint format.

Layout (all integers little-endian)::

    b"UCNV"  u32 version
    repeated until EOF:
        u32 name_len, name bytes (utf-8)
        u32 rank, rank x u64 extents
        prod(extents) x f64 payload

Layer configuration (filter sizes, stride lists, policy tags) is stored as
ordinary records under dotted names, so one reader handles everything.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"UCNV"
VERSION = 1


class CheckpointFormatError(ValueError):
    pass


def save(path, arrays: dict[str, np.ndarray]) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        for name, arr in arrays.items():
            a = np.array(arr, dtype="<f8", order="C")  # ascontiguousarray would promote 0-d to 1-d
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<I", a.ndim))
            fh.write(struct.pack(f"<{a.ndim}Q", *a.shape))
            fh.write(a.tobytes())


def load(path) -> dict[str, np.ndarray]:
    buf = Path(path).read_bytes()
    if buf[:4] != MAGIC:
        raise CheckpointFormatError(f"{path}: bad magic {buf[:4]!r}")
    if len(buf) < 8:
        raise CheckpointFormatError(f"{path}: truncated header")
    (version,) = struct.unpack_from("<I", buf, 4)
    if version != VERSION:
        raise CheckpointFormatError(f"{path}: unsupported version {version}")
    pos = 8
    out: dict[str, np.ndarray] = {}
    try:
        while pos < len(buf):
            (n,) = struct.unpack_from("<I", buf, pos)
            pos += 4
            name = buf[pos : pos + n].decode("utf-8")
            pos += n
            (rank,) = struct.unpack_from("<I", buf, pos)
            pos += 4
            shape = struct.unpack_from(f"<{rank}Q", buf, pos)
            pos += 8 * rank
            count = int(np.prod(shape, dtype=np.int64))
            if pos + 8 * count > len(buf):
                raise CheckpointFormatError(f"{path}: truncated payload for {name!r}")
            out[name] = np.frombuffer(buf, dtype="<f8", count=count, offset=pos).reshape(shape).copy()
            pos += 8 * count
    except struct.error as exc:
        raise CheckpointFormatError(f"{path}: truncated record") from exc
    return out


def _named_modules(value, name: str = ""):
    from .nn import Module

    if isinstance(value, Module):
        yield name, value
        for key, v in vars(value).items():
            if not key.startswith("_"):
                yield from _named_modules(v, f"{name}{key}.")
    elif isinstance(value, (list, tuple)):
        for i, v in enumerate(value):
            yield from _named_modules(v, f"{name}{i}.")


def model_records(module) -> dict[str, np.ndarray]:
    """Parameters under ``param.<name>`` plus every conv layer's configuration."""
    rec = {f"param.{k}": v for k, v in module.state_dict().items()}
    for name, m in _named_modules(module):
        if hasattr(m, "config_records"):
            rec.update(m.config_records(f"layer.{name}"))
    return rec


def save_model(path, module) -> None:
    save(path, model_records(module))


def load_model(path, module) -> dict[str, np.ndarray]:
    """Load parameters saved by :func:`save_model` into ``module``.

    Layer configuration records must match the module's own, so a checkpoint
    cannot be loaded into a differently configured network. Returns all records.
    """
    rec = load(path)
    for key, want in model_records(module).items():
        if key.startswith("param."):
            continue
        got = rec.get(key)
        if got is None or got.shape != np.shape(want) or not np.array_equal(got, want):
            raise CheckpointFormatError(f"{path}: layer config {key!r} does not match the model")
    module.load_state_dict({k[len("param."):]: v for k, v in rec.items() if k.startswith("param.")})
    return rec
