"""Command line entry point: ``ifsync run | check | list-experiments``."""

import argparse
import csv
import json
import math
import os
import sys
import time
import traceback
import warnings

import numpy as np

from .config import KINDS, ConfigError, load_config
from .experiments import CATALOG, NEEDS_STATIONARY, RUNNERS, Context
from .system import check_assumptions

EXIT_OK = 0
EXIT_FAILED = 2
EXIT_CONFIG = 3


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    return str(v)


def write_csv(path, columns, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _has_nan(obj):
    if isinstance(obj, dict):
        return any(_has_nan(v) for v in obj.values())
    if isinstance(obj, (list, tuple)):
        return any(_has_nan(v) for v in obj)
    if isinstance(obj, (float, np.floating)):
        return math.isnan(obj)
    return False


def run_config(cfg, out_dir, only=None, stream=sys.stdout):
    """Run every experiment of ``cfg``; write CSVs, ``summary.json`` and
    ``timing.json`` to ``out_dir``. Returns ``(summary, exit_code)``."""
    system = cfg.system.build()
    os.makedirs(out_dir, exist_ok=True)
    ctx = Context(system, cfg.seed)
    report = ctx.report
    summary = {
        "config": cfg.model_dump(mode="json"),
        "seed": cfg.seed,
        "assumptions": report.to_dict(),
        "experiments": {},
    }
    timing = {}
    selected = [e for e in cfg.experiments if only in (None, e.label, e.kind)]
    if only is not None and not selected:
        raise ConfigError(f"no experiment named {only!r} in config")
    any_failed = False
    for exp in selected:
        label = exp.label
        entry = {"kind": exp.kind, "params": exp.model_dump(mode="json")}
        if exp.kind in NEEDS_STATIONARY and not report.a3:
            entry.update(status="skipped",
                         reason="boundary exponents not both positive; no interior "
                                "stationary measure")
            # still record the diagnostic that triggered the skip
            if exp.kind == "stationary":
                from . import markov
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    mu = markov.stationary_measure(system, "ulam", cells=exp.cells, a=exp.a)
                entry["diagnostic"] = mu.diagnostic.to_dict()
            summary["experiments"][label] = entry
            print(f"{label:<16} SKIPPED  {entry['reason']}", file=stream)
            continue
        t0 = time.perf_counter()
        try:
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                outcome = RUNNERS[exp.kind](system, exp, ctx)
            verdicts = [v.to_dict() for v in outcome.verdicts]
            passed = all(v["passed"] for v in verdicts)
            status = "passed" if passed else "failed"
            if _has_nan(outcome.summary):
                status = "failed"
                entry["error"] = "NaN in estimator output"
            entry.update(status=status, result=outcome.summary, verdicts=verdicts,
                         warnings=sorted({str(w.message) for w in caught}))
            files = []
            for suffix, (columns, rows) in outcome.tables.items():
                name = f"{label}{suffix}.csv"
                write_csv(os.path.join(out_dir, name), columns, rows)
                files.append(name)
            entry["csv"] = files
        except Exception as exc:  # a broken experiment must not stop the run
            entry.update(status="failed", error=f"{type(exc).__name__}: {exc}")
            traceback.print_exc(file=sys.stderr)
        timing[label] = time.perf_counter() - t0
        summary["experiments"][label] = entry
        any_failed |= entry["status"] == "failed"
        print(f"{label:<16} {entry['status'].upper():<8} {timing[label]:8.1f}s", file=stream)
        for v in entry.get("verdicts", []):
            mark = "pass" if v["passed"] else "FAIL"
            value = "nan" if v["value"] is None else f"{v['value']:.6g}"
            print(f"    {mark}  {v['check']:<32} {value:>14}  {v['target']}", file=stream)
        if "error" in entry:
            print(f"    error: {entry['error']}", file=stream)
    summary["all_passed"] = not any_failed
    with open(os.path.join(out_dir, "summary.json"), "w", encoding="utf-8") as fh:
        json.dump(_clean(summary), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")
    with open(os.path.join(out_dir, "timing.json"), "w", encoding="utf-8") as fh:
        json.dump(timing, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary, EXIT_FAILED if any_failed else EXIT_OK


def cmd_run(args):
    overrides = list(args.set or [])
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    cfg = load_config(args.config, overrides)
    out = args.out or cfg.output
    _, code = run_config(cfg, out, args.only)
    print(f"results in {out}")
    return code


def cmd_check(args):
    cfg = load_config(args.config, args.set or [])
    system = cfg.system.build()
    report = check_assumptions(system, cfg.system.grid_size)
    print(json.dumps(_clean(report.to_dict()), indent=2, sort_keys=True))
    for exp in cfg.experiments:
        skip = exp.kind in NEEDS_STATIONARY and not report.a3
        print(f"{exp.label:<16} {'would be skipped' if skip else 'ok'}")
    return EXIT_OK


def cmd_list(args):
    for kind, model in KINDS.items():
        anchor, what = CATALOG[kind]
        print(f"{kind}  [{anchor}]  {what}")
        for name, f in model.model_fields.items():
            if name in ("kind", "name"):
                continue
            print(f"    {name} = {f.default!r}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="ifsync", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run the experiments of a config file")
    p.add_argument("config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--only", help="run a single experiment (name or kind)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config value, e.g. sync.replicas=1000")
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("check", help="validate a config and report assumptions")
    p.add_argument("config")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.set_defaults(func=cmd_check)
    p = sub.add_parser("list-experiments", help="list experiment kinds and defaults")
    p.set_defaults(func=cmd_list)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        # e.g. a map that is not a diffeomorphism, caught only when building
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
