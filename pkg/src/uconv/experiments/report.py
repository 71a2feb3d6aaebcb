from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

SCHEMA_VERSION = 1


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if hasattr(obj, "item") and callable(obj.item):
        return obj.item()
    if hasattr(obj, "tolist"):
        return obj.tolist()
    return obj


@dataclass
class RunReport:
    name: str
    config: dict
    seed: int
    loss_trace: list[float] = field(default_factory=list)
    metrics: dict = field(default_factory=dict)
    wall_time: float = 0.0
    extra: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    def to_json(self) -> str:
        # repr-precision floats round-trip exactly through json
        return json.dumps(_jsonable(asdict(self)), indent=2, sort_keys=True, allow_nan=True)

    @classmethod
    def from_json(cls, text: str) -> RunReport:
        d = json.loads(text)
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported report schema {d.get('schema_version')}")
        return cls(**d)

    def save(self, directory, stem: str | None = None) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        stem = stem or self.name
        path = directory / f"{stem}.json"
        path.write_text(self.to_json(), encoding="utf-8")
        if self.loss_trace:
            write_loss_csv(directory / f"{stem}_loss.csv", self.loss_trace)
        return path

    def metric_signature(self) -> dict:
        """Everything that must be bit-identical across same-seed runs."""
        return {"metrics": _jsonable(self.metrics), "loss_trace": list(self.loss_trace)}


def write_loss_csv(path, trace) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "loss"])
        for i, v in enumerate(trace):
            w.writerow([i, repr(float(v)) if math.isfinite(v) else str(v)])
