"""Command line entry point.

``h1modlab run CONFIG`` writes ``<prefix>.record`` (JSON) and
``<prefix>.table.csv``.  Exit codes: 0 all verdicts pass, 2 schema error,
3 some verdict fails, 4 a solver did not converge, 5 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import EXPERIMENTS, config_schema, parse_config
from .errors import NotConverged, SchemaError
from .experiments import run

log = logging.getLogger("h1modlab")

EXIT_OK, EXIT_SCHEMA, EXIT_FAIL, EXIT_NOT_CONVERGED, EXIT_IO = 0, 2, 3, 4, 5


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer, int)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    return x


def write_outputs(prefix: str, record: dict, columns: list, rows: list) -> tuple:
    rec = Path(f"{prefix}.record")
    tab = Path(f"{prefix}.table.csv")
    rec.parent.mkdir(parents=True, exist_ok=True)
    rec.write_text(json.dumps(_jsonable(record), indent=2, sort_keys=True) + "\n")
    with tab.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    return rec, tab


def cmd_run(args) -> int:
    try:
        cfg = parse_config(Path(args.config).read_text())
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    threads = args.threads or cfg.threads
    prefix = args.out or cfg.output or Path(args.config).with_suffix("").as_posix()
    t0 = time.perf_counter()
    try:
        out = run(cfg.experiment, cfg.params, cfg.seed, threads)
    except NotConverged as exc:
        print(f"not converged: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    record = {"version": __version__, "experiment": cfg.experiment, "seed": cfg.seed,
              "params": cfg.params, "tolerances": out.tolerances, "results": out.results,
              "verdicts": out.verdicts, "passed": out.passed,
              "wall_time": time.perf_counter() - t0}
    try:
        rec, tab = write_outputs(prefix, record, out.columns, out.rows)
    except OSError as exc:
        print(f"cannot write output: {exc}", file=sys.stderr)
        return EXIT_IO
    for name, ok in out.verdicts.items():
        print(f"{name}: {'PASS' if ok else 'FAIL'}")
    print(f"wrote {rec} and {tab}")
    return EXIT_OK if out.passed else EXIT_FAIL


def cmd_validate(args) -> int:
    try:
        cfg = parse_config(Path(args.config).read_text())
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    print(f"ok: {cfg.experiment}")
    return EXIT_OK


def cmd_schema(args) -> int:
    print(json.dumps(config_schema(args.experiment), indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="h1modlab", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config")
    r.add_argument("--out", help="output prefix (default: config path without suffix)")
    r.add_argument("--threads", type=int, default=None)
    r.set_defaults(func=cmd_run)
    v = sub.add_parser("validate", help="check a config against its schema")
    v.add_argument("config")
    v.set_defaults(func=cmd_validate)
    s = sub.add_parser("schema", help="print the JSON schema of an experiment config")
    s.add_argument("experiment", choices=EXPERIMENTS)
    s.set_defaults(func=cmd_schema)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
