"""Command-line runner: ``wfsim run <experiment> [--config FILE] [--key value ...]``.

Exit codes: 0 when every check passes, 1 on invalid input, 2 when a check fails.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import subprocess
import sys
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np
import yaml

from . import __version__
from .engine import set_threads
from .experiments import REGISTRY, Experiment, Output

log = logging.getLogger(__name__)

RUNNER_KEYS = ("out", "threads", "config", "log_level")


class InputError(Exception):
    """Bad flag, config key or parameter value."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InputError(message)


def _scalar(kind: type) -> Callable[[Any], Any]:
    def convert(value):
        if isinstance(value, bool):
            raise InputError(f"expected {kind.__name__}, got {value!r}")
        if kind is int:
            f = float(value)
            if not f.is_integer():
                raise InputError(f"expected an integer, got {value!r}")
            return int(f)
        return kind(value)

    return convert


def converter(default: Any) -> Callable[[Any], Any]:
    """Value parser matching the type of a parameter's default (scalar, list, or list of lists)."""
    if isinstance(default, list):
        inner = default[0] if default else 0.0
        if isinstance(inner, list):
            row = converter(inner)

            def rows(value):
                if isinstance(value, str):
                    value = [r for r in value.split(";") if r.strip()]
                return [row(r) for r in value]

            return rows
        elem = _scalar(type(inner))

        def items(value):
            if isinstance(value, str):
                value = [v for v in value.split(",") if v.strip()]
            elif not isinstance(value, (list, tuple)):
                value = [value]
            return [elem(v) for v in value]

        return items
    return _scalar(type(default))


def _wrap(conv, key):
    def parse(value):
        try:
            return conv(value)
        except (TypeError, ValueError) as exc:
            raise InputError(f"invalid value for {key}: {value!r} ({exc})") from None

    return parse


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="wfsim", description="Wright-Fisher kernel simulations and checks.", allow_abbrev=False)
    parser.add_argument("--version", action="version", version=f"wfsim {__version__}")
    top = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    run = top.add_parser("run", help="run one experiment", allow_abbrev=False)
    subs = run.add_subparsers(dest="experiment", required=True, parser_class=_Parser)
    for exp in REGISTRY.values():
        sp = subs.add_parser(exp.name, help=exp.help, description=exp.help, allow_abbrev=False)
        sp.add_argument("--config", help="YAML file of parameter values")
        sp.add_argument("--out", help="output directory (default runs/<experiment>)")
        sp.add_argument("--threads", type=int, help="worker threads (default: logical cores)")
        sp.add_argument("--log-level", default="WARNING")
        for key, default in exp.params.items():
            sp.add_argument(
                "--" + key.replace("_", "-"),
                dest=key,
                type=_wrap(converter(default), key),
                default=None,
                help=f"default: {default}",
            )
    return parser


def load_config(path: str | None, exp: Experiment) -> dict:
    if not path:
        return {}
    try:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise InputError(f"cannot read config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise InputError(f"config {path} must be a mapping")
    resolved = {}
    for raw, value in data.items():
        key = str(raw).replace("-", "_")
        if key in ("out", "threads"):
            resolved[key] = value
            continue
        if key not in exp.params:
            raise InputError(f"unknown config key: {raw}")
        resolved[key] = _wrap(converter(exp.params[key]), key)(value)
    return resolved


def resolve(exp: Experiment, args: argparse.Namespace) -> tuple[dict, dict]:
    """Defaults, then config file, then flags. Returns (experiment parameters, runner settings)."""
    cfg = dict(exp.params)
    file_cfg = load_config(args.config, exp)
    runner = {"out": file_cfg.pop("out", None), "threads": file_cfg.pop("threads", None)}
    cfg.update(file_cfg)
    for key in exp.params:
        value = getattr(args, key)
        if value is not None:
            cfg[key] = value
    for key in ("out", "threads"):
        if getattr(args, key) is not None:
            runner[key] = getattr(args, key)
    return cfg, runner


def build_id() -> str:
    try:
        res = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=5,
        )
        if res.returncode == 0 and res.stdout.strip():
            return f"{__version__}+{res.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def _plain(value):
    """JSON-safe copy: numpy scalars and arrays to Python, non-finite floats to null."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [_plain(v) for v in value]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def write_csv(path: Path, rows: Sequence[dict]) -> None:
    if not rows:
        path.write_text("", encoding="utf-8")
        return
    with path.open("w", newline="", encoding="utf-8") as fh:
        fields = list(dict.fromkeys(k for row in rows for k in row))
        writer = csv.DictWriter(fh, fieldnames=fields, restval="", lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(float(v)) if isinstance(v, (float, np.floating)) else v for k, v in row.items()})


def write_outputs(out_dir: Path, exp: Experiment, cfg: dict, result: Output) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, rows in result.tables.items():
        write_csv(out_dir / f"{name}.csv", rows)
    summary = {
        "experiment": exp.name,
        "build": build_id(),
        "passed": result.passed,
        "checks": dict(result.checks),
        "config": cfg,
        "results": result.summary,
    }
    (out_dir / "summary.json").write_text(json.dumps(_plain(summary), indent=2) + "\n", encoding="utf-8")
    (out_dir / "config.yaml").write_text(yaml.safe_dump(_plain(cfg), sort_keys=False), encoding="utf-8")
    return out_dir


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        exp = REGISTRY[args.experiment]
        cfg, runner = resolve(exp, args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    set_threads(runner["threads"])
    try:
        result = exp.run(cfg)
    except (ValueError, InputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    out_dir = write_outputs(Path(runner["out"] or Path("runs") / exp.name), exp, cfg, result)
    for name, ok in result.checks.items():
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    print(f"wrote {out_dir}")
    return 0 if result.passed else 2


if __name__ == "__main__":
    sys.exit(main())
