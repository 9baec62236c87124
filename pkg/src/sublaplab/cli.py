"""Batch experiment runner.

Subcommands: check-lyapunov, poincare-gap, improved-gap, offdiag,
quadratic-id, covering, nonlocal, all (pipelines over one config), plus
compare (field-wise relative differences between two reports).

Exit codes: 0 all asserted inequalities hold, 2 an assertion failed (the
witness is in the report), 1 configuration or numerical error.

Reports are deterministic: identical config, seed, and thread count yield
byte-identical report.json; timing and environment go to metadata.json.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time

# Heavy imports happen inside main() after the thread count is pinned.


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sublaplab",
        description="Spectral and non-local inequality experiments for weighted "
                    "sub-Laplacians on Euclidean and Heisenberg groups.")
    sub = parser.add_subparsers(dest="command", required=True)
    run_names = ("check-lyapunov", "poincare-gap", "improved-gap", "offdiag",
                 "quadratic-id", "covering", "nonlocal", "all")
    for name in run_names:
        p = sub.add_parser(name, help=f"run the {name} pipeline")
        p.add_argument("--config", required=True, help="experiment config file")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--threads", type=int, default=1,
                       help="BLAS/OpenMP thread count (default 1, deterministic)")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        p.add_argument("--export-forms", action="store_true",
                       help="also write D/B/B_mu in sparse triplet text format")
    cmp_p = sub.add_parser("compare", help="field-wise relative diff of two reports")
    cmp_p.add_argument("report_a")
    cmp_p.add_argument("report_b")
    cmp_p.add_argument("--tolerance", type=float, default=0.0,
                       help="report only differences above this relative size")
    cmp_p.add_argument("--fail-above", type=float, default=None,
                       help="exit 2 when any relative difference exceeds this")
    return parser


def _set_threads(n: int) -> None:
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "NUMEXPR_NUM_THREADS"):
        os.environ[var] = str(n)


def _jsonable(obj):
    import numpy as np
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, float) and math.isinf(obj):
        return "inf" if obj > 0 else "-inf"
    return obj


def _write_csv(path, table) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(table["header"])
        for row in table["rows"]:
            writer.writerow(row)


def _numeric_leaves(obj, prefix=""):
    if isinstance(obj, dict):
        for k in sorted(obj):
            yield from _numeric_leaves(obj[k], f"{prefix}.{k}" if prefix else str(k))
    elif isinstance(obj, list):
        for i, v in enumerate(obj):
            yield from _numeric_leaves(v, f"{prefix}[{i}]")
    elif isinstance(obj, bool):
        return
    elif isinstance(obj, (int, float)):
        yield prefix, float(obj)


def _cmd_compare(args) -> int:
    try:
        with open(args.report_a) as fh:
            rep_a = json.load(fh)
        with open(args.report_b) as fh:
            rep_b = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if rep_a.get("schema_version") != rep_b.get("schema_version"):
        print("error: schema_version mismatch", file=sys.stderr)
        return 1
    leaves_a = dict(_numeric_leaves(rep_a.get("pipelines", {})))
    leaves_b = dict(_numeric_leaves(rep_b.get("pipelines", {})))
    diffs = {}
    for key in sorted(set(leaves_a) & set(leaves_b)):
        a, b = leaves_a[key], leaves_b[key]
        scale = max(abs(a), abs(b))
        rel = 0.0 if scale == 0 else abs(a - b) / scale
        if rel > args.tolerance:
            diffs[key] = {"a": a, "b": b, "rel": rel}
    only_a = sorted(set(leaves_a) - set(leaves_b))
    only_b = sorted(set(leaves_b) - set(leaves_a))
    summary = {
        "n_compared": len(set(leaves_a) & set(leaves_b)),
        "max_rel_diff": max((d["rel"] for d in diffs.values()), default=0.0),
        "diffs": diffs,
        "only_in_a": only_a,
        "only_in_b": only_b,
    }
    print(json.dumps(summary, indent=2, sort_keys=True))
    if args.fail_above is not None and summary["max_rel_diff"] > args.fail_above:
        return 2
    return 0


def _cmd_run(args) -> int:
    _set_threads(args.threads)
    import numpy as np  # noqa: F401  (imported after thread pinning)

    from . import __version__, kernels, pipelines
    from .config import ConfigError, load_config
    from .grids import GridError, ResolventError, write_triplets
    from .spectral import DenseCeilingError, EigenSolveError
    from .weights import CertificateError, WeightError

    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    if args.seed is not None:
        cfg.seed = args.seed
    out_dir = args.out or cfg.output_dir or "."
    os.makedirs(out_dir, exist_ok=True)

    t_start = time.time()
    try:
        body, ctx = pipelines.run(cfg, args.command)
    except (GridError, WeightError, CertificateError, ResolventError,
            EigenSolveError, DenseCeilingError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    duration = time.time() - t_start

    report = {
        "schema_version": 1,
        "tool_version": __version__,
        "subcommand": args.command,
        "config": cfg.canonical_lines(),
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
        "threads": args.threads,
        "backend": kernels.BACKEND,
    }
    report.update(body)
    report_path = os.path.join(out_dir, "report.json")
    with open(report_path, "w") as fh:
        json.dump(_jsonable(report), fh, indent=2, sort_keys=True)
        fh.write("\n")

    metadata = {
        "timestamp_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "duration_seconds": duration,
        "python": sys.version.split()[0],
        "argv": sys.argv[1:],
    }
    with open(os.path.join(out_dir, "metadata.json"), "w") as fh:
        json.dump(metadata, fh, indent=2, sort_keys=True)
        fh.write("\n")

    for name, table in ctx.csv_tables.items():
        _write_csv(os.path.join(out_dir, f"{name}.csv"), table)

    if args.export_forms:
        from scipy import sparse
        write_triplets(ctx.forms.D, os.path.join(out_dir, "D.triplets.txt"))
        write_triplets(sparse.diags(ctx.forms.B),
                       os.path.join(out_dir, "B.triplets.txt"))
        write_triplets(sparse.diags(ctx.forms.B_mu),
                       os.path.join(out_dir, "B_mu.triplets.txt"))

    failures = [a for a in ctx.assertions if not a["holds"]]
    for a in ctx.assertions:
        status = "ok" if a["holds"] else "FAIL"
        print(f"[{status}] {a['name']}: {a['detail']}")
    print(f"report: {report_path}")
    return 2 if failures else 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.command == "compare":
        return _cmd_compare(args)
    return _cmd_run(args)


if __name__ == "__main__":
    sys.exit(main())
