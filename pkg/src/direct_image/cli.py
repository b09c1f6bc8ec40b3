"""Command-line runner: ``direct-image --scenario berndtsson-q0 --out reports``.

Each scenario writes ``<out>/<name>/report.json``, one ``<out>/<name>/<check>.csv``
per check and ``<out>/<name>/timing.json`` (wall times, kept out of the report so
reports are byte-stable). Exit status: 0 when every check meets its expected
verdict, 1 otherwise, 2 for configuration errors.
"""

import argparse
import csv
import hashlib
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from ._accel import USE_NUMBA
from .checks import CHECK_FUNCS, Context
from .errors import DirectImageError
from .scenario import CHECKS, ScenarioError, build_family, bundled, bundled_scenarios, load_scenario

WORKERS_ENV = "DIRECT_IMAGE_WORKERS"
EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _plain(x):
    """JSON-safe copy with numpy scalars unwrapped and non-finite floats as strings."""
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, complex):
        return [_plain(x.real), _plain(x.imag)]
    return x


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    return v


def write_csv(path, rows):
    fields = []
    for r in rows:
        for k in r:
            if k not in fields:
                fields.append(k)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _cell(v) for k, v in r.items()})


def run_scenario(sc, refine=False):
    """Run every requested check; returns ``(report, tables, timings)``."""
    fam = build_family(sc)
    ctx = Context(sc, refine)
    results, tables, timings = {}, {}, {}
    for name in sc.checks:
        t0 = time.perf_counter()
        try:
            res = CHECK_FUNCS[name](sc, fam, ctx)
            d = res.as_dict()
            tables[name] = res.table
        except DirectImageError as e:
            d = {"verdict": "error", "error": f"{type(e).__name__}: {e}", "scenario": sc.name}
            tables[name] = []
        d["expected"] = sc.expected_verdict(name)
        d["meets_expectation"] = d["verdict"] == d["expected"]
        results[name] = d
        timings[name] = time.perf_counter() - t0
    prov = {"resolution": sc.resolution, "h_fd": sc.h_fd if sc.kind == "family" else sc.modular["step"],
            "eps": ctx._eps, "seed": sc.seed, "refine": bool(refine), "numba": USE_NUMBA, "version": __version__}
    report = {"scenario": sc.name, "kind": sc.kind, "provenance": prov, "checks": results,
              "passed": all(r["meets_expectation"] for r in results.values())}
    return _plain(report), tables, timings


def _job(args):
    path, overrides, refine = args
    sc = load_scenario(path).with_overrides(**overrides)
    report, tables, timings = run_scenario(sc, refine)
    report["config_sha256"] = hashlib.sha256(Path(path).read_bytes()).hexdigest()
    return sc.name, report, tables, timings


def write_outputs(out, name, report, tables, timings):
    d = Path(out) / name
    d.mkdir(parents=True, exist_ok=True)
    (d / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    for check, rows in tables.items():
        write_csv(d / f"{check}.csv", rows)
    (d / "timing.json").write_text(json.dumps({k: round(v, 3) for k, v in timings.items()}, indent=2) + "\n")


def _resolve(s):
    p = Path(s)
    if p.exists():
        return p
    if not s.endswith(".toml"):
        return bundled(s)
    raise ScenarioError(f"scenario file {s} not found")


def build_parser():
    ap = argparse.ArgumentParser(prog="direct-image", description="Run curvature experiments on families of tori.")
    ap.add_argument("--scenario", action="append", default=[],
                    help="scenario file or bundled scenario name (repeatable; default: all bundled)")
    ap.add_argument("--out", default="reports", help="output directory")
    ap.add_argument("--resolution", type=int, help="override the fiber grid resolution")
    ap.add_argument("--fd-step", type=float, help="override the base finite-difference step")
    ap.add_argument("--eps", type=float, help="override the regularization eps")
    ap.add_argument("--checks", help="comma-separated subset of checks: " + ",".join(CHECKS))
    ap.add_argument("--refine", action="store_true", help="also run the scenario's refinement ladder")
    ap.add_argument("--seed", type=int, help="override the scenario seed")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def _workers():
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        w = int(raw)
    except ValueError:
        raise ScenarioError(f"{WORKERS_ENV}={raw!r} is not an integer") from None
    if w < 1:
        raise ScenarioError(f"{WORKERS_ENV} must be at least 1")
    return w


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        paths = [_resolve(s) for s in args.scenario] or bundled_scenarios()
        checks = None
        if args.checks:
            checks = [c.strip() for c in args.checks.split(",") if c.strip()]
        if args.resolution is not None and (args.resolution < 8 or args.resolution % 2):
            raise ScenarioError("--resolution must be an even integer >= 8")
        if args.fd_step is not None and not args.fd_step > 0:
            raise ScenarioError("--fd-step must be positive")
        if args.eps is not None and args.eps < 0:
            raise ScenarioError("--eps must be non-negative")
        overrides = {"resolution": args.resolution, "fd_step": args.fd_step, "eps": args.eps, "checks": checks,
                     "seed": args.seed}
        scs = [load_scenario(p).with_overrides(**overrides) for p in paths]
        for s in scs:
            build_family(s)
        names = [s.name for s in scs]
        if len(set(names)) != len(names):
            raise ScenarioError("scenario names must be unique within one run")
        workers = _workers()
    except ScenarioError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG

    jobs = [(p, overrides, args.refine) for p in paths]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_job, jobs))
    else:
        outcomes = [_job(j) for j in jobs]
    status = EXIT_OK
    for name, report, tables, timings in outcomes:
        write_outputs(args.out, name, report, tables, timings)
        for check, res in report["checks"].items():
            mark = "ok" if res["meets_expectation"] else "MISMATCH"
            print(f"{name:24s} {check:22s} {res['verdict']:5s} (expected {res['expected']}) {mark}")
        if not report["passed"]:
            status = EXIT_FAIL
    return status


if __name__ == "__main__":
    sys.exit(main())
