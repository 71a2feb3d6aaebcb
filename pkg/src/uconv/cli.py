"""Command-line entry point: ``uconv <subcommand> [--config PATH] [--out DIR] [--seed N] [--set K=V ...]``.

Exit codes: 0 success, 1 config or usage error, 2 IO error (including
missing MNIST files), 3 failed check.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from .experiments.ccae import CcaeConfig, run_ccae, summarize
from .experiments.mnist import CcnnConfig, PartialSweepConfig, load_split, run_mnist, run_partial_sweep
from .experiments.mpnet import MpNetConfig, make_series, per_snapshot_rows, run_mpnet, run_pod_baseline
from .pointfield import SnapshotSeries, read_series, write_series
from .synthetic import bump_flow_family

__all__ = ["main", "ConfigError", "parse_config_text", "build_config"]

SUBCOMMANDS = (
    "train-mnist",
    "partial-sweep",
    "train-ccae",
    "train-mpnet",
    "pod-baseline",
    "gen-data",
    "gradcheck",
    "oracle-check",
)
EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_CHECK = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


class _CheckFailed(Exception):
    pass


class _DataError(Exception):
    """Unreadable or malformed input files."""


def _load(fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (OSError, ValueError) as exc:
        raise _DataError(str(exc)) from exc


@dataclasses.dataclass
class GenDataConfig:
    kind: str = "all"  # bump_flow, traveling_wave or all
    bump_samples: int = 500
    bump_points: int = 1639
    wave: MpNetConfig = dataclasses.field(default_factory=MpNetConfig)


# keys accepted by each subcommand on top of its experiment config, with defaults
_EXTRAS = {
    "train-mnist": {"mnist_dir": ""},
    "partial-sweep": {"mnist_dir": ""},
    "train-ccae": {"data": "", "repeats": 5, "fractions": (0.2,), "archs": ("ccae", "mlp")},
    "train-mpnet": {"data": ""},
    "pod-baseline": {"data": ""},
    "gen-data": {},
    "gradcheck": {"tol": 1e-5},
    "oracle-check": {},
}


def parse_config_text(text: str) -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment; blank lines are ignored."""
    out = {}
    for no, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {no}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"config line {no}: empty key")
        out[key] = value
    return out


def _coerce(key: str, raw: str, default):
    try:
        if isinstance(default, bool):
            if raw.lower() not in ("true", "false", "1", "0"):
                raise ValueError(raw)
            return raw.lower() in ("true", "1")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            kind = type(default[0]) if default else float
            return tuple(kind(v.strip()) for v in raw.split(",") if v.strip())
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {raw!r}") from exc


def build_config(cls, raw: dict[str, str], extras: dict | None = None):
    """Typed ``cls`` instance plus extra options from string key/values.

    Unknown keys are a config error. Dotted keys address nested dataclasses.
    """
    extras = dict(extras or {})
    values: dict = {}
    nested: dict[str, dict[str, str]] = {}
    fields = {f.name: f for f in dataclasses.fields(cls)} if cls is not None else {}
    defaults = cls() if cls is not None else None
    for key, value in raw.items():
        head, _, rest = key.partition(".")
        if rest and head in fields and dataclasses.is_dataclass(getattr(defaults, head)):
            nested.setdefault(head, {})[rest] = value
        elif key in fields:
            values[key] = _coerce(key, value, getattr(defaults, key))
        elif key in extras:
            extras[key] = _coerce(key, value, extras[key])
        else:
            raise ConfigError(f"unknown config key {key!r}")
    for head, sub in nested.items():
        values[head], _ = build_config(type(getattr(defaults, head)), sub)
    cfg = cls(**values) if cls is not None else None
    return cfg, extras


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_CONFIG)


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="uconv", description="Continuous convolution experiments and checks.")
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", type=Path, help="file of 'key = value' lines")
    p.add_argument("--out", type=Path, default=Path("runs"), help="parent of the run directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", dest="overrides")
    return p


def _run_dir(out: Path, sub: str, seed: int) -> Path:
    stamp = time.strftime("%Y%m%d-%H%M%S")
    base = out / f"{sub}_{stamp}_s{seed}"
    path, k = base, 1
    while path.exists():
        path = Path(f"{base}_{k}")
        k += 1
    path.mkdir(parents=True)
    return path


def _effective(cfg, extras: dict, seed: int) -> dict:
    d = dataclasses.asdict(cfg) if cfg is not None else {}
    return {**d, **extras, "seed": seed}


def _save_reports(reports, run_dir: Path, echo: dict) -> None:
    for r in reports:
        r.config = {**r.config, "cli": echo}
        r.save(run_dir)


def _mnist_dir(extras) -> str:
    return extras["mnist_dir"] or os.environ.get("UCONV_MNIST_DIR", "data/mnist")


def _bump_data(cfg: CcaeConfig, path: str):
    if not path:
        return bump_flow_family(cfg.n_samples, cfg.n_points, cfg.data_seed)
    series = _load(read_series, path)
    mus = _load(np.loadtxt, Path(path).parent / "mu.csv", delimiter=",", skiprows=1, ndmin=2)[:, 1]
    return series.coords, mus, series.values


def _wave_data(cfg: MpNetConfig, path: str) -> SnapshotSeries:
    return _load(read_series, path) if path else make_series(cfg)


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _cmd_train_mnist(cfg, extras, seed, run_dir, echo):
    data = _load(load_split, _mnist_dir(extras), cfg.train_n, cfg.test_n)
    report = run_mnist(cfg, data, seed, checkpoint=run_dir / "model.ucnv")
    _save_reports([report], run_dir, echo)
    print(f"{cfg.first_layer}: test accuracy {report.metrics['test_accuracy']:.4f}")


def _cmd_partial_sweep(cfg, extras, seed, run_dir, echo):
    data = _load(load_split, _mnist_dir(extras), cfg.train_n, cfg.test_n)
    reports = run_partial_sweep(cfg, data, seed, checkpoint_dir=run_dir)
    _save_reports(reports, run_dir, echo)
    rows = [(r.metrics["percentage"], r.metrics["kept_pixels"], r.metrics["test_accuracy"]) for r in reports]
    _write_rows(run_dir / "sweep.csv", ["percentage", "kept_pixels", "test_accuracy"], rows)
    for pct, kept, acc in rows:
        print(f"P={pct:g}%  kept={kept}  test accuracy {acc:.4f}")


def _cmd_train_ccae(cfg, extras, seed, run_dir, echo):
    data = _bump_data(cfg, extras["data"])
    reports = run_ccae(cfg, fractions=extras["fractions"], repeats=extras["repeats"], seed=seed,
                       archs=extras["archs"], data=data, checkpoint_dir=run_dir)
    _save_reports(reports, run_dir, echo)
    summary = summarize(reports)
    (run_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    for key, err in sorted(summary.items()):
        print(f"{key}: mean test rel-l2 {err:.3f}%")


def _cmd_train_mpnet(cfg, extras, seed, run_dir, echo):
    series = _wave_data(cfg, extras["data"])
    report = run_mpnet(cfg, seed, series, checkpoint=run_dir / "model.ucnv")
    _save_reports([report], run_dir, echo)
    _write_rows(run_dir / "per_snapshot.csv", ["index", "t", "split", "mpnet_rel_l2", "pod_rel_l2"],
                per_snapshot_rows(report))
    m = report.metrics
    print(f"mpnet test rel-l2 {m['test_rel_l2']:.3f}%  (pod r={cfg.pod_rank}: {m['pod_test_rel_l2']:.3f}%)")


def _cmd_pod_baseline(cfg, extras, seed, run_dir, echo):
    series = _wave_data(cfg, extras["data"])
    report = run_pod_baseline(cfg, series)
    _save_reports([report], run_dir, echo)
    train = set(report.extra["train_indices"])
    rows = [(i, t, "train" if i in train else "test", e)
            for i, (t, e) in enumerate(zip(series.times, report.extra["per_snapshot"]))]
    _write_rows(run_dir / "per_snapshot.csv", ["index", "t", "split", "pod_rel_l2"], rows)
    print(f"pod rank {report.metrics['rank']}: test rel-l2 {report.metrics['test_rel_l2']:.3f}%")


def _cmd_gen_data(cfg: GenDataConfig, extras, seed, run_dir, echo):
    if cfg.kind not in ("bump_flow", "traveling_wave", "all"):
        raise ConfigError(f"kind must be bump_flow, traveling_wave or all, got {cfg.kind!r}")
    if cfg.kind in ("bump_flow", "all"):
        coords, mus, values = bump_flow_family(cfg.bump_samples, cfg.bump_points, seed)
        # the series axis is the sample index; amplitudes go to mu.csv
        series = SnapshotSeries(coords, np.arange(len(mus), dtype=np.float64), values)
        manifest = run_dir / "bump_flow" / "manifest.csv"
        write_series(manifest, series, stem="sample")
        _write_rows(manifest.parent / "mu.csv", ["index", "mu"],
                    [(i, format(m, ".17g")) for i, m in enumerate(mus)])
        print(f"bump_flow: {len(mus)} fields on {len(coords)} points -> {manifest}")
    if cfg.kind in ("traveling_wave", "all"):
        wave = dataclasses.replace(cfg.wave, data_seed=seed)
        series = make_series(wave)
        manifest = run_dir / "traveling_wave" / "manifest.csv"
        write_series(manifest, series)
        print(f"traveling_wave: {len(series.times)} snapshots on {len(series.coords)} points -> {manifest}")


def _cmd_gradcheck(cfg, extras, seed, run_dir, echo):
    from .gradcheck import run_suite

    results = run_suite(seed)
    tol = extras["tol"]
    rows = [(name, f"{err:.3e}", "ok" if err < tol else "FAIL") for name, err in results.items()]
    _write_rows(run_dir / "gradcheck.csv", ["op", "max_rel_error", "status"], rows)
    width = max(len(r[0]) for r in rows)
    print(f"{'op':<{width}}  max rel. error  status")
    for name, err, status in rows:
        print(f"{name:<{width}}  {err:>14}  {status}")
    if any(r[2] != "ok" for r in rows):
        raise _CheckFailed("gradient check failed")


def _cmd_oracle_check(cfg, extras, seed, run_dir, echo):
    from .checks import fixture_checks

    res = fixture_checks()
    _write_rows(run_dir / "oracle_check.csv", ["fixture", "passed", "max_abs_dev"],
                [(k, ok, dev) for k, (ok, dev) in res.items()])
    for name, (ok, dev) in res.items():
        print(f"{name:<28} {'ok' if ok else 'FAIL'}  max dev {dev:.3g}")
    if not all(ok for ok, _ in res.values()):
        raise _CheckFailed("fixture mismatch")


_COMMANDS = {
    "train-mnist": (CcnnConfig, _cmd_train_mnist),
    "partial-sweep": (PartialSweepConfig, _cmd_partial_sweep),
    "train-ccae": (CcaeConfig, _cmd_train_ccae),
    "train-mpnet": (MpNetConfig, _cmd_train_mpnet),
    "pod-baseline": (MpNetConfig, _cmd_pod_baseline),
    "gen-data": (GenDataConfig, _cmd_gen_data),
    "gradcheck": (None, _cmd_gradcheck),
    "oracle-check": (None, _cmd_oracle_check),
}


def main(argv=None) -> int:
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:  # usage errors and --help
        return int(exc.code or 0)
    cls, fn = _COMMANDS[args.subcommand]
    try:
        raw = parse_config_text(args.config.read_text(encoding="utf-8")) if args.config else {}
        for item in args.overrides:
            if "=" not in item:
                raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
            k, v = item.split("=", 1)
            raw[k.strip()] = v.strip()
        if args.seed < 0 or args.seed >= 2**64:
            raise ConfigError(f"seed must fit in u64, got {args.seed}")
        cfg, extras = build_config(cls, raw, _EXTRAS[args.subcommand])
        echo = _effective(cfg, extras, args.seed)
        run_dir = _run_dir(args.out, args.subcommand, args.seed)
        (run_dir / "config.json").write_text(json.dumps(echo, indent=2, sort_keys=True, default=list))
        fn(cfg, extras, args.seed, run_dir, echo)
    except ConfigError as exc:
        print(f"uconv: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (_DataError, OSError) as exc:
        print(f"uconv: io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        # contract violations from configured values, e.g. a window larger than the domain
        print(f"uconv: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _CheckFailed as exc:
        print(f"uconv: check failed: {exc}", file=sys.stderr)
        return EXIT_CHECK
    print(f"run directory: {run_dir}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
