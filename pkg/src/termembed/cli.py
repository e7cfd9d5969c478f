"""Command-line surface: build, query, verify-chd, eval, scaling.

Every subcommand is deterministic given its RunConfig: one global 64-bit
seed (flag, else TE_SEED, else 0) fans out to labeled sub-seeds for the
sketch, the query samplers, and the hull-distortion estimator, and the
config is echoed into every artifact. stdout carries data (JSON lines or
reports); stderr carries errors only.

Exit codes: 0 success, 1 usage, 2 input/dimension error, 3 assertion
threshold failed (the report is still written).
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import harness, pointio
from .chd import certify_grid, estimate_sampled
from .errors import EmbeddingError, FormatError
from .extension import EfnEmbedder, SolverConfig, build_embedder
from .geometry import build_point_set, direction_set
from .seeding import derive_seed
from .sketch import (
    ExactEmbedding,
    exact_small_embedding,
    generate_sketch,
    load_sketch,
    plan_dimension,
    save_sketch,
)

BUNDLE_MAGIC = "TEBL"

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INPUT = 2
EXIT_ASSERT = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; the contract here is 1.
    def error(self, message):
        raise _UsageError(message)


@dataclass(frozen=True)
class RunConfig:
    epsilon: float
    C: float
    distribution: str
    seed: int
    solver_max_iters: int
    solver_tol: float
    solver_step_rule: str
    threads: int

    def solver(self) -> SolverConfig:
        return SolverConfig(
            max_iters=self.solver_max_iters,
            tol=self.solver_tol,
            step_rule=self.solver_step_rule,
        )


def _dump_json(obj, path=None) -> str:
    text = json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n"
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def _resolve_seed(value) -> int:
    if value is not None:
        return int(value)
    env = os.environ.get("TE_SEED")
    return int(env) if env else 0


def _run_config(args) -> RunConfig:
    return RunConfig(
        epsilon=args.epsilon,
        C=args.const_c,
        distribution=args.dist,
        seed=_resolve_seed(args.seed),
        solver_max_iters=args.solver_iters,
        solver_tol=args.solver_tol,
        solver_step_rule=args.solver_step_rule,
        threads=args.threads,
    )


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epsilon", type=float, default=0.25, help="distortion target in (0,1)")
    p.add_argument("--const-C", dest="const_c", type=float, default=4.0,
                   help="constant C in m = ceil(C * eps^-2 * ln|Y|)")
    p.add_argument("--dist", choices=["rademacher", "gaussian"], default="rademacher",
                   help="sketch entry distribution")
    p.add_argument("--seed", type=int, default=None,
                   help="global seed (default: TE_SEED env var, else 0)")
    p.add_argument("--solver-iters", type=int, default=5000, help="feasibility solver iteration cap")
    p.add_argument("--solver-tol", type=float, default=1e-3,
                   help="relative slack on the eps*R residual target")
    p.add_argument("--solver-step-rule", choices=["polyak", "diminishing"], default="polyak")
    p.add_argument("--threads", type=int, default=1,
                   help="worker cap; results are identical for any value")
    p.add_argument("--format", dest="fmt", choices=["csv", "bin"], default=None,
                   help="override point-file format detection")


def _parse_asserts(pairs) -> dict[str, float]:
    out = {}
    for raw in pairs or []:
        if "=" not in raw:
            raise _UsageError(f"--assert expects KEY=VALUE, got {raw!r}")
        key, val = raw.split("=", 1)
        try:
            out[key.strip().replace("-", "_")] = float(val)
        except ValueError:
            raise _UsageError(f"--assert value must be numeric, got {raw!r}")
    return out


def _check_asserts(thresholds: dict[str, float], measured: dict) -> list[str]:
    failures = []
    for key, bound in thresholds.items():
        if key not in measured:
            raise _UsageError(
                f"unknown assert key {key!r}; known: {', '.join(sorted(measured))}"
            )
        value = measured[key]
        if not (value <= bound):
            failures.append(f"{key}={value!r} exceeds {bound!r}")
    return failures


# ---------------------------------------------------------------------------
# bundle I/O


def _save_bundle(out_dir: Path, cfg: RunConfig, X, plan, source, fmt) -> dict:
    out_dir.mkdir(parents=True, exist_ok=True)
    pointio.write_points_bin(out_dir / "points.bin", X.points)
    meta = {
        "magic": BUNDLE_MAGIC,
        "mode": plan.mode,
        "m_plan": plan.m,
        "epsilon": cfg.epsilon,
        "C": cfg.C,
        "distribution": cfg.distribution,
        "seed": cfg.seed,
        "solver": {
            "max_iters": cfg.solver_max_iters,
            "tol": cfg.solver_tol,
            "step_rule": cfg.solver_step_rule,
        },
        "threads": cfg.threads,
        "n": X.n,
        "d": X.d,
        "source": str(source),
        "format": fmt,
    }
    if plan.mode == "sketch":
        pi = generate_sketch(plan.m, X.d, cfg.distribution, derive_seed(cfg.seed, "sketch"))
        save_sketch(pi, out_dir / "sketch.json", out_dir / "sketch.bin", C=cfg.C)
        embedder = build_embedder(X, pi, cfg.epsilon, cfg.solver())
        pointio.write_points_bin(out_dir / "embedded.bin", embedder.embedded_X)
        meta["out_dim"] = embedder.out_dim
    else:
        emb = exact_small_embedding(X)
        pointio.write_points_bin(out_dir / "basis.bin", emb.basis)
        pointio.write_points_bin(out_dir / "embedded.bin", emb.terminal_coords)
        meta["rank"] = emb.rank
        meta["out_dim"] = emb.out_dim
    _dump_json(meta, out_dir / "config.json")
    return meta


def load_bundle(bundle_dir):
    """Reconstruct the embedder (sketch or exact path) from a bundle dir."""
    bundle_dir = Path(bundle_dir)
    cfg_path = bundle_dir / "config.json"
    if not cfg_path.exists():
        raise FormatError(f"{bundle_dir}: not a bundle (missing config.json)")
    meta = json.loads(cfg_path.read_text(encoding="utf-8"))
    if meta.get("magic") != BUNDLE_MAGIC:
        raise FormatError(f"{cfg_path}: bad magic {meta.get('magic')!r}")
    X = build_point_set(pointio.read_points_bin(bundle_dir / "points.bin"))
    if meta["mode"] == "sketch":
        pi, _ = load_sketch(bundle_dir / "sketch.json")
        solver = SolverConfig(
            max_iters=int(meta["solver"]["max_iters"]),
            tol=float(meta["solver"]["tol"]),
            step_rule=str(meta["solver"]["step_rule"]),
        )
        embedder = build_embedder(X, pi, float(meta["epsilon"]), solver)
    else:
        basis = pointio.read_points_bin(bundle_dir / "basis.bin")
        embedder = ExactEmbedding(point_set=X, basis=basis)
    return embedder, meta


# ---------------------------------------------------------------------------
# subcommands


def _cmd_build(args) -> int:
    cfg = _run_config(args)
    fmt = pointio.detect_format(args.points, args.fmt)
    X = build_point_set(pointio.read_points(args.points, fmt))
    plan = plan_dimension(X.n, cfg.epsilon, cfg.C)
    meta = _save_bundle(Path(args.out), cfg, X, plan, args.points, fmt)
    sys.stdout.write(
        _dump_json({"mode": meta["mode"], "m": meta["m_plan"], "out_dim": meta["out_dim"]})
    )
    return EXIT_OK


def _cmd_query(args) -> int:
    embedder, meta = load_bundle(args.bundle)
    fmt = pointio.detect_format(args.queries, args.fmt)
    queries = pointio.read_points(args.queries, fmt)
    out_path = Path(args.out)
    diag_path = Path(args.diagnostics) if args.diagnostics else out_path.with_suffix(
        out_path.suffix + ".diag.json"
    )

    if queries.shape[0] == 0:
        if fmt == "bin":
            pointio.write_points_bin(out_path, np.zeros((0, meta["out_dim"])))
        else:
            pointio.write_points_csv(out_path, np.zeros((0, 0)))
        _dump_json({"config": meta, "queries": 0, "per_query": []}, diag_path)
        return EXIT_OK

    if queries.shape[1] != meta["d"]:
        raise EmbeddingError(
            f"queries have dimension {queries.shape[1]}, bundle expects {meta['d']}"
        )
    outputs = np.empty((queries.shape[0], meta["out_dim"]))
    per_query = []
    has_info = hasattr(embedder, "embed_with_info")
    for i in range(queries.shape[0]):
        if has_info:
            outputs[i], sol = embedder.embed_with_info(queries[i])
            per_query.append(
                {
                    "residual": sol.residual,
                    "iterations": sol.iterations,
                    "anchor_index": sol.anchor_index,
                    "converged": sol.converged,
                }
            )
        else:
            outputs[i] = embedder.embed(queries[i])
            diff = embedder.X.points - queries[i]
            anchor = int(np.argmin(np.einsum("ij,ij->i", diff, diff)))
            per_query.append(
                {"residual": 0.0, "iterations": 0, "anchor_index": anchor, "converged": True}
            )
    pointio.write_points(out_path, outputs, fmt)
    _dump_json({"config": meta, "queries": len(per_query), "per_query": per_query}, diag_path)
    return EXIT_OK


def _cmd_verify_chd(args) -> int:
    embedder, meta = load_bundle(args.bundle)
    seed = _resolve_seed(args.seed) if args.seed is not None else int(meta["seed"])
    report: dict = {
        "m": meta.get("m_plan"),
        "epsilon": meta["epsilon"],
        "seed": seed,
    }
    if meta["mode"] != "sketch":
        # The exact path is an isometry on the terminal span; there is no
        # sketch to audit.
        report.update({"method": "exact_small", "max_violation": 0.0, "witness_weights": []})
    else:
        Y = direction_set(embedder.X)
        if len(Y) == 0:
            report.update({"method": "sampled", "max_violation": 0.0, "witness_weights": []})
        else:
            est = estimate_sampled(
                embedder.Pi, Y, args.samples, derive_seed(seed, "chd")
            )
            report.update(
                {
                    "method": est.method,
                    "max_violation": est.max_violation,
                    "witness_weights": [float(w) for w in est.witness.weights],
                }
            )
            if args.grid is not None and len(Y) <= 6:
                grid = certify_grid(embedder.Pi, Y, args.grid)
                report["certified_bound"] = grid.certified_bound
                report["grid_max"] = grid.max_violation

    text = _dump_json(report, args.report)
    if args.report is None:
        sys.stdout.write(text)
    failures = _check_asserts(_parse_asserts(args.asserts), report)
    if failures:
        for f in failures:
            sys.stderr.write(f"assert failed: {f}\n")
        return EXIT_ASSERT
    return EXIT_OK


def _cmd_eval(args) -> int:
    embedder, meta = load_bundle(args.bundle)
    seed = _resolve_seed(args.seed) if args.seed is not None else int(meta["seed"])
    if args.queries_file:
        fmt = pointio.detect_format(args.queries_file, None)
        queries = pointio.read_points(args.queries_file, fmt)
        labels = ["file"] * queries.shape[0]
    else:
        modes = args.samplers.split(",") if args.samplers else None
        queries, labels = harness.sample_suite(
            embedder.X, args.queries_per_mode, derive_seed(seed, "samplers"), modes
        )
    target = embedder
    if args.baseline == "efn":
        base = (
            embedder.embedded_X
            if not isinstance(embedder, ExactEmbedding)
            else embedder.terminal_coords
        )
        target = EfnEmbedder(X=embedder.X, base_images=base)
    report = harness.evaluate(
        target,
        queries,
        labels,
        config_echo={**meta, "eval_seed": seed, "baseline": args.baseline},
        keep_raw=args.raw_dump is not None,
    )
    if args.raw_dump:
        harness.write_raw_csv(report, args.raw_dump)
    text = report.to_json() if args.report is None else _dump_json(report.to_dict(), args.report)
    if args.report is None:
        sys.stdout.write(text)
    measured = {
        "max_ratio_dev": report.max_abs_ratio_dev,
        "distortion": report.distortion,
        "max_residual": report.max_residual,
        "ratio_max": report.ratio_max,
        "max_anchor_rel_error": report.max_anchor_rel_error,
    }
    failures = _check_asserts(_parse_asserts(args.asserts), measured)
    if failures:
        for f in failures:
            sys.stderr.write(f"assert failed: {f}\n")
        return EXIT_ASSERT
    return EXIT_OK


def _cmd_scaling(args) -> int:
    cfg = _run_config(args)
    fmt = pointio.detect_format(args.points, args.fmt)
    X = build_point_set(pointio.read_points(args.points, fmt))
    epsilons = [float(t) for t in args.epsilons.split(",")]
    consts = [float(t) for t in args.consts.split(",")]
    seeds = [int(t) for t in args.seeds.split(",")]
    rows = harness.scaling_study(
        X,
        epsilons,
        consts,
        seeds,
        distribution=cfg.distribution,
        queries_per_mode=args.queries_per_mode,
        chd_samples=args.chd_samples,
        solver=cfg.solver(),
    )
    if args.out and args.out.endswith(".json"):
        _dump_json(rows, args.out)
    elif args.out:
        Path(args.out).write_text(harness.scaling_table_csv(rows), encoding="utf-8")
    else:
        sys.stdout.write(harness.scaling_table_csv(rows))
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(
        prog="termembed",
        description="Terminal dimensionality reduction: build a sketch bundle, "
        "embed queries with all distances to the terminal set preserved, and "
        "verify the distortion empirically.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="sketch a point set into an embedder bundle")
    p.add_argument("points", help="terminal point file (.csv or .bin)")
    p.add_argument("--out", required=True, help="bundle directory to write")
    _add_common(p)
    p.set_defaults(func=_cmd_build)

    p = sub.add_parser("query", help="embed query points against a bundle")
    p.add_argument("bundle", help="bundle directory from `build`")
    p.add_argument("queries", help="query point file (.csv or .bin)")
    p.add_argument("out", help="output file; same format family as the input")
    p.add_argument("--diagnostics", default=None, help="diagnostics JSON path")
    p.add_argument("--format", dest="fmt", choices=["csv", "bin"], default=None)
    p.set_defaults(func=_cmd_query)

    p = sub.add_parser("verify-chd", help="estimate the sketch's convex-hull distortion")
    p.add_argument("bundle")
    p.add_argument("--samples", type=int, default=20000, help="sampled hull points")
    p.add_argument("--seed", type=int, default=None, help="override the bundle seed")
    p.add_argument("--grid", type=float, default=None,
                   help="also run the certified grid at this step (|Y| <= 6 only)")
    p.add_argument("--report", default=None, help="write the JSON report here instead of stdout")
    p.add_argument("--assert", dest="asserts", action="append", metavar="KEY=VAL",
                   help="exit 3 unless measured KEY <= VAL (e.g. max_violation=0.25)")
    p.set_defaults(func=_cmd_verify_chd)

    p = sub.add_parser("eval", help="measure terminal distortion over sampled queries")
    p.add_argument("bundle")
    p.add_argument("--queries-per-mode", type=int, default=25)
    p.add_argument("--samplers", default=None,
                   help="comma list, e.g. box,member,shell:0.5,far:3 (default: full suite)")
    p.add_argument("--queries-file", default=None,
                   help="evaluate these points instead of sampled queries")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--baseline", choices=["solver", "efn"], default="solver",
                   help="efn swaps in the snap-to-nearest baseline extension")
    p.add_argument("--report", default=None)
    p.add_argument("--raw-dump", default=None, help="per-pair CSV dump path")
    p.add_argument("--assert", dest="asserts", action="append", metavar="KEY=VAL",
                   help="e.g. max_ratio_dev=0.3 or distortion=1.5")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("scaling", help="factorial (epsilon, C, seed) distortion study")
    p.add_argument("points")
    p.add_argument("--epsilons", required=True, help="comma list, e.g. 0.5,0.25")
    p.add_argument("--consts", required=True, help="comma list of C values")
    p.add_argument("--seeds", required=True, help="comma list of seeds")
    p.add_argument("--queries-per-mode", type=int, default=10)
    p.add_argument("--chd-samples", type=int, default=2000)
    p.add_argument("--out", default=None, help=".csv or .json table (default: stdout CSV)")
    _add_common(p)
    p.set_defaults(func=_cmd_scaling)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except _UsageError as exc:
        sys.stderr.write(f"usage error: {exc}\n")
        return EXIT_USAGE
    except (EmbeddingError, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
