"""Command-line surface: cluster, generate, evaluate, sweep-r, oracle,
breakdown.  All structured output is JSON with an embedded run manifest;
observation indices and cluster numbers are 1-based on every JSON surface.

Exit codes: 0 success, 2 input parse error, 3 no start produced a result.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys

import numpy as np

from . import __version__, breakdown, datagen, oracle, solver, stats
from .configuration import load_csv, save_csv
from .errors import AllStartsFailed, CsvParseError, TdclustError

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_NO_RESULT = 3


def _digest(path) -> str:
    hasher = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(65536), b""):
            hasher.update(block)
    return hasher.hexdigest()


def make_manifest(command: str, parameters: dict, seed, input_path=None) -> dict:
    return {
        "command": command,
        "parameters": parameters,
        "seed": seed,
        "input_digest": _digest(input_path) if input_path else None,
        "tool_version": __version__,
    }


def _resolve_seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("TDC_SEED")
    return int(env) if env else 0


def _write_json(payload: dict, out_path) -> None:
    text = json.dumps(payload, indent=2)
    if out_path is None or out_path == "-":
        sys.stdout.write(text + "\n")
    else:
        with open(out_path, "w") as fh:
            fh.write(text + "\n")


def _certificate_payload(cert, error):
    if cert is None:
        return {"ok": False, "error": error or "not computed"}
    return {
        "ok": cert.ok,
        "ellipsoid_ok": cert.ellipsoid_ok,
        "ellipsoid_margin": _finite(cert.ellipsoid_margin),
        "hyperplane_ok": cert.hyperplane_ok,
        "hyperplane_margin": _finite(cert.hyperplane_margin),
        "pairs": [
            {
                "clusters": [p.pair[0] + 1, p.pair[1] + 1],
                "margin": _finite(p.margin),
                "midpoint": p.midpoint.tolist(),
            }
            for p in cert.pair_checks
        ],
    }


def _finite(x: float):
    return x if np.isfinite(x) else None


def solve_report_payload(report: solver.SolveReport, manifest: dict) -> dict:
    per_start = [
        {
            "start": rec.start,
            "iterations": rec.iterations,
            "log_det": rec.log_det,
            "converged": rec.converged,
        }
        for rec in report.per_start
    ]
    return {
        "manifest": manifest,
        "retained": [int(i) + 1 for i in report.best.indices],
        "labels": [int(l) + 1 for l in report.best.labels],
        "g": report.best.g,
        "r": report.best.r,
        "log_det": report.log_det,
        "det": report.det,
        "means": report.mle_means.tolist(),
        "covariance": report.mle_cov.tolist(),
        "mixing": report.mixing.tolist(),
        "per_start": per_start,
        "certificate": _certificate_payload(report.certificate, report.certificate_error),
    }


def cmd_cluster(args) -> int:
    seed = _resolve_seed(args)
    try:
        data = load_csv(args.csv)
    except CsvParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    settings = solver.SolverSettings(
        g=args.g,
        r=args.r,
        starts=args.starts,
        seed=seed,
        init_method=args.init,
        max_iters=args.max_iters,
    )
    try:
        report = solver.multistart(data, settings, threads=args.threads)
    except AllStartsFailed as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_RESULT
    except (TdclustError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    manifest = make_manifest(
        "cluster",
        {
            "g": args.g,
            "r": args.r,
            "starts": args.starts,
            "init": args.init,
            "max_iters": args.max_iters,
            "threads": args.threads,
        },
        seed,
        args.csv,
    )
    _write_json(solve_report_payload(report, manifest), args.out)
    return EXIT_OK


def cmd_generate(args) -> int:
    seed = _resolve_seed(args)
    if args.spec:
        with open(args.spec) as fh:
            raw = json.load(fh)
        raw.setdefault("seed", seed)
        spec = datagen.GeneratorSpec(**raw)
    else:
        spec = datagen.GeneratorSpec(
            d=args.d,
            clusters=args.clusters,
            per_cluster=args.per_cluster,
            alpha=args.alpha,
            outlier_mode=args.outliers,
            beta=args.beta,
            diffuse_v=args.diffuse_v,
            outlier_count=args.outlier_count,
            seed=seed,
        )
    labeled = datagen.generate(spec)
    csv_path = f"{args.out_prefix}.csv"
    truth_path = f"{args.out_prefix}.truth.json"
    save_csv(labeled.dataset, csv_path)
    manifest = make_manifest("generate", spec.to_dict(), spec.seed, csv_path)
    datagen.write_truth(labeled, spec, truth_path, manifest=manifest)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    try:
        with open(args.result) as fh:
            result = json.load(fh)
        with open(args.truth) as fh:
            truth = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE

    est_means = np.array(result["means"])
    est_cov = np.array(result["covariance"])
    estimated = [stats.NormalParams.from_arrays(m, est_cov) for m in est_means]
    true_params = [
        stats.NormalParams.from_arrays(np.array(p["mean"]), np.array(p["cov"]))
        for p in truth["true_params"]
    ]
    perm, max_distance = stats.best_matching(estimated, true_params)
    pair_distances = [
        stats.bhattacharyya(estimated[perm[j]], true_params[j])
        for j in range(len(true_params))
    ]

    true_labels = np.array(truth["true_labels"], dtype=np.int64)
    retained = np.array(result["retained"], dtype=np.int64) - 1
    labels = np.array(result["labels"], dtype=np.int64) - 1
    # Map estimated cluster -> true cluster through the matching.
    est_to_true = {perm[j]: j + 1 for j in range(len(perm))}
    retained_true = true_labels[retained]
    regular_mask = retained_true > 0
    mapped = np.array([est_to_true.get(int(l), 0) for l in labels])
    misclassified = int(np.sum(mapped[regular_mask] != retained_true[regular_mask]))

    n = true_labels.size
    discarded = np.setdiff1d(np.arange(n), retained)
    true_outliers = np.nonzero(true_labels == 0)[0]
    hits = np.intersect1d(discarded, true_outliers).size
    precision = hits / discarded.size if discarded.size else 1.0
    recall = hits / true_outliers.size if true_outliers.size else 1.0

    payload = {
        "manifest": make_manifest(
            "evaluate", {"result": str(args.result), "truth": str(args.truth)}, None
        ),
        "matching": [p + 1 for p in perm],
        "pair_bhattacharyya": pair_distances,
        "max_bhattacharyya": max_distance,
        "misclassified_regular": misclassified,
        "retained_regular": int(regular_mask.sum()),
        "outlier_precision": precision,
        "outlier_recall": recall,
    }
    _write_json(payload, args.out)
    return EXIT_OK


def cmd_sweep_r(args) -> int:
    seed = _resolve_seed(args)
    try:
        data = load_csv(args.csv)
    except CsvParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    candidates = [int(tok) for tok in args.r_candidates.split(",")]
    settings = solver.SolverSettings(
        g=args.g, r=candidates[0], starts=args.starts, seed=seed, init_method=args.init
    )
    try:
        sweep = stats.sweep_r(data, candidates, settings, threads=args.threads)
    except TdclustError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_RESULT
    payload = {
        "manifest": make_manifest(
            "sweep-r",
            {"g": args.g, "candidates": candidates, "starts": args.starts},
            seed,
            args.csv,
        ),
        "recommended_r": sweep.recommended_r,
        "diagnostics": [
            {
                "r": diag.r_candidate,
                "fractions": {str(k): v for k, v in diag.fractions.items()},
                "score": diag.score,
            }
            for diag in sweep.diagnostics
        ],
        "errors": {str(k): v for k, v in sweep.errors.items()},
    }
    _write_json(payload, args.out)
    return EXIT_OK


def cmd_oracle(args) -> int:
    try:
        data = load_csv(args.csv)
    except CsvParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    fn = oracle.impartial_trimming_oracle if args.objective == "trace" else oracle.enumerate_optimum
    result = fn(data, args.g, args.r)
    payload = {
        "manifest": make_manifest(
            "oracle",
            {"g": args.g, "r": args.r, "objective": args.objective},
            None,
            args.csv,
        ),
        "retained": [int(i) + 1 for i in result.optimum.indices],
        "labels": [int(l) + 1 for l in result.optimum.labels],
        "cost": result.cost,
        "log_cost": result.log_cost,
        "scanned": result.scanned,
        "ties": result.ties,
    }
    _write_json(payload, args.out)
    return EXIT_OK


def cmd_breakdown(args) -> int:
    try:
        data = load_csv(args.csv)
    except CsvParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    indices = tuple(int(tok) - 1 for tok in args.indices.split(","))
    schedule = tuple(float(tok) for tok in args.magnitudes.split(","))
    placement = (
        breakdown.TwinPair(args.gap)
        if args.placement == "twin"
        else breakdown.FarApart(args.factor)
    )
    plan = breakdown.ReplacementPlan(indices=indices, schedule=schedule, placement=placement)
    probe = breakdown.probe_mean_breakdown if args.kind == "mean" else breakdown.probe_ssp_breakdown
    report = probe(data, args.g, args.r, plan)
    payload = {
        "manifest": make_manifest(
            "breakdown",
            {
                "kind": args.kind,
                "g": args.g,
                "r": args.r,
                "indices": list(args.indices.split(",")),
                "magnitudes": list(schedule),
                "placement": args.placement,
            },
            None,
            args.csv,
        ),
        "kind": args.kind,
        **report.to_dict(),
    }
    _write_json(payload, args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tdclust",
        description="Robust trimmed-determinant cluster analysis",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("cluster", help="solve a CSV dataset")
    p.add_argument("csv")
    p.add_argument("--g", type=int, required=True)
    p.add_argument("--r", type=int, required=True)
    p.add_argument("--starts", type=int, default=2000)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--init", choices=("a", "b"), default="a")
    p.add_argument("--max-iters", type=int, default=200)
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("generate", help="generate a synthetic dataset + truth")
    p.add_argument("--spec", default=None, help="JSON file with generator fields")
    p.add_argument("--d", type=int, default=8)
    p.add_argument("--clusters", type=int, default=None)
    p.add_argument("--per-cluster", type=int, default=100)
    p.add_argument("--alpha", type=float, default=0.999)
    p.add_argument("--outliers", choices=("shell", "diffuse", "none"), default="shell")
    p.add_argument("--beta", type=float, default=0.999)
    p.add_argument("--diffuse-v", type=float, default=16.0)
    p.add_argument("--outlier-count", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-prefix", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", help="score a solve result against truth")
    p.add_argument("result")
    p.add_argument("truth")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep-r", help="recommend r via tail diagnostics")
    p.add_argument("csv")
    p.add_argument("--g", type=int, required=True)
    p.add_argument("--r-candidates", required=True, help="comma-separated r values")
    p.add_argument("--starts", type=int, default=500)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--init", choices=("a", "b"), default="a")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_sweep_r)

    p = sub.add_parser("oracle", help="exact enumeration optimum (small n)")
    p.add_argument("csv")
    p.add_argument("--g", type=int, required=True)
    p.add_argument("--r", type=int, required=True)
    p.add_argument("--objective", choices=("det", "trace"), default="det")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("breakdown", help="replacement breakdown probes")
    p.add_argument("csv")
    p.add_argument("--kind", choices=("mean", "ssp"), required=True)
    p.add_argument("--g", type=int, required=True)
    p.add_argument("--r", type=int, required=True)
    p.add_argument("--indices", required=True, help="comma-separated 1-based indices")
    p.add_argument("--magnitudes", default="1e2,1e4,1e6")
    p.add_argument("--placement", choices=("twin", "far"), default="twin")
    p.add_argument("--gap", type=float, default=1e-3)
    p.add_argument("--factor", type=float, default=2.0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_breakdown)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
