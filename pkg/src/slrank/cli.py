"""Command-line entry point: ``slrank <subcommand> ...``.

Exit status: 0 on success, 1 on I/O failure, 2 on usage errors, 3 on invalid
input data.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict
from typing import Optional, Sequence

from . import formats, harness, planning, service
from .baseline import ScoreConfig
from .core import InstanceError, evaluate
from .ranker import rank_feasible, rank_randomized

EXIT_IO = 1
EXIT_USAGE = 2
EXIT_DATA = 3


class _Fail(Exception):
    def __init__(self, code: int, category: str, message: str):
        super().__init__(message)
        self.code = code
        self.category = category


def _read_json(path: str):
    try:
        if path == "-":
            text = sys.stdin.read()
        else:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
    except OSError as exc:
        raise _Fail(EXIT_IO, "io", f"cannot read {path}: {exc.strerror}") from None
    return formats.loads(text)


class _Output:
    def __init__(self, path: Optional[str]):
        self.path = path
        self.fh = None

    def __enter__(self):
        if self.path in (None, "-"):
            return sys.stdout
        try:
            self.fh = open(self.path, "w", encoding="utf-8", newline="")
        except OSError as exc:
            raise _Fail(EXIT_IO, "io", f"cannot write {self.path}: {exc.strerror}") from None
        return self.fh

    def __exit__(self, *exc):
        if self.fh is not None:
            self.fh.close()


def _dump(obj, out_path):
    with _Output(out_path) as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")


def _floats(text: str):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _sizes(text: str):
    out = []
    for tok in text.split(","):
        try:
            m, n = tok.lower().split("x")
            out.append((int(m), int(n)))
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected sizes like 10x50,50x500, got {text!r}") from None
    return out


def cmd_rank(args):
    imp = formats.impression_from_dict(_read_json(args.input))
    out = rank_feasible(imp) if args.mode == "feasible" else rank_randomized(imp, args.seed)
    res = evaluate(imp, out.plan)
    body = {
        "item_ids": imp.to_caller_order(out.plan),
        "provenance": out.plan.provenance,
        "revenue": res.revenue,
        "relevance": res.relevance,
        "relevance_ratio": res.relevance_ratio,
        "constraint_redundant": out.constraint_redundant,
        "iterations": out.iterations,
    }
    if args.mode == "randomized":
        body["seed"] = args.seed
        body["branch"] = out.branch
    if args.baseline_w is not None:
        from .baseline import score_rank

        bplan = score_rank(imp, ScoreConfig(args.baseline_w))
        bres = evaluate(imp, bplan)
        body["baseline"] = {"w": args.baseline_w, "item_ids": imp.to_caller_order(bplan),
                            "revenue": bres.revenue, "relevance": bres.relevance,
                            "relevance_ratio": bres.relevance_ratio}
    _dump(body, args.output)


def cmd_bench_lambda(args):
    recs = harness.run_lambda_sweep(args.m, args.n, args.lambdas, args.trials, args.seed)
    with _Output(args.output) as fh:
        harness.write_csv(recs, fh, timing=not args.no_timing)


def cmd_bench_size(args):
    recs = harness.run_size_sweep(args.sizes, args.lam, args.trials, args.seed)
    with _Output(args.output) as fh:
        harness.write_csv(recs, fh, timing=not args.no_timing)


def cmd_tune(args):
    history = formats.history_from_dict(_read_json(args.input))
    stat = args.statistic
    if args.quantile is not None:
        stat = args.quantile
    rep = harness.tune_lambda(history, stat, args.delta, args.steps)
    body = asdict(rep)
    body["quantiles"] = {f"{q:g}": v for q, v in rep.quantiles.items()}
    body["grid"] = list(rep.grid)
    _dump(body, args.output)


def cmd_verify(args):
    rep = harness.verify_theorem1(args.m, args.n, args.lam, args.instances, args.draws, args.seed)
    body = {
        "instances": len(rep.checks),
        "skipped_degenerate": rep.skipped_degenerate,
        "skipped_redundant": rep.skipped_redundant,
        "pooled_revenue_z": rep.pooled_revenue_z,
        "pooled_relevance_z": rep.pooled_relevance_z,
        "fractional_cells_within_3se": rep.cell_within_3se,
        "integral_cells_max_deviation": rep.integral_max_dev,
        "instances_revenue_within_3se": rep.instance_revenue_within_3se,
        "instances_relevance_within_3se": rep.instance_relevance_within_3se,
        "max_exact_mean_error": rep.max_exact_mean_error,
    }
    _dump(body, args.output)


def cmd_plan_duals(args):
    model = formats.model_from_dict(_read_json(args.input))
    est = planning.estimate_duals(model, planning.AscentConfig(args.step, args.iterations))
    body = formats.model_to_dict(est.model)
    body["report"] = {
        "dual_bound": est.dual_bound,
        "primal_value": est.primal_value,
        "best_feasible_value": est.best_feasible_value,
        "gap": est.gap,
        "iterations": est.iterations,
        "violations": est.violations,
    }
    _dump(body, args.output)


def cmd_plan_rank(args):
    model = formats.model_from_dict(_read_json(args.input))
    results = []
    for t, pi in enumerate(model.impressions):
        out = planning.rank_with_duals(pi.impression, model, pi.consumer)
        res = evaluate(pi.impression, out.plan)
        results.append({
            "impression": t,
            "consumer": pi.consumer,
            "item_ids": pi.impression.to_caller_order(out.plan),
            "revenue": res.revenue,
            "relevance_ratio": res.relevance_ratio,
            "constraint_redundant": out.constraint_redundant,
        })
    plans = [planning.rank_with_duals(pi.impression, model, pi.consumer).plan for pi in model.impressions]
    _dump({"rankings": results, "violations": planning.violations(model, plans)}, args.output)


def cmd_export_lp(args):
    model = formats.model_from_dict(_read_json(args.input))
    with _Output(args.output) as fh:
        stats = planning.export_offline_lp(model, fh)
    print(f"variables={stats.variables} rows={stats.rows}", file=sys.stderr)


def cmd_serve(args):
    port = args.port
    if port is None:
        port = int(os.environ.get(service.PORT_ENV, service.DEFAULT_PORT))
    profile = None
    if args.weight_profile:
        profile = _read_json(args.weight_profile)
        if not isinstance(profile, list):
            raise _Fail(EXIT_DATA, "data", "weight profile must be a JSON array of numbers")
    service.serve(args.host, port, args.deadline_ms / 1e3, profile)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="slrank", description="LP-based sponsored listings ranking")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("rank", help="rank one impression document")
    s.add_argument("--input", required=True)
    s.add_argument("--mode", choices=("feasible", "randomized"), default="feasible")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--baseline-w", type=float, default=None)
    s.add_argument("--output")
    s.set_defaults(func=cmd_rank)

    s = sub.add_parser("bench-lambda", help="lambda sweep at fixed size (CSV)")
    s.add_argument("--m", type=int, default=50)
    s.add_argument("--n", type=int, default=500)
    s.add_argument("--lambdas", type=_floats,
                   default=[.1, .2, .3, .4, .5, .6, .7, .8, .9, .925, .95, .975])
    s.add_argument("--trials", type=int, default=100)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--no-timing", action="store_true", help="write timing columns as 0")
    s.add_argument("--output")
    s.set_defaults(func=cmd_bench_lambda)

    s = sub.add_parser("bench-size", help="size sweep at fixed lambda (CSV)")
    s.add_argument("--sizes", type=_sizes, default=_sizes("10x50,20x100,50x500,50x2000,500x500"))
    s.add_argument("--lambda", dest="lam", type=float, default=0.95)
    s.add_argument("--trials", type=int, default=100)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--no-timing", action="store_true", help="write timing columns as 0")
    s.add_argument("--output")
    s.set_defaults(func=cmd_bench_size)

    s = sub.add_parser("tune", help="starting lambda from historical rankings")
    s.add_argument("--input", required=True)
    s.add_argument("--statistic", choices=("mean", "median"), default="mean")
    s.add_argument("--quantile", type=float, default=None)
    s.add_argument("--delta", type=float, default=0.025)
    s.add_argument("--steps", type=int, default=2)
    s.add_argument("--output")
    s.set_defaults(func=cmd_tune)

    s = sub.add_parser("verify-theorem1", help="Monte-Carlo check of the randomized ranker")
    s.add_argument("--m", type=int, default=3)
    s.add_argument("--n", type=int, default=6)
    s.add_argument("--lambda", dest="lam", type=float, default=0.95)
    s.add_argument("--instances", type=int, default=200)
    s.add_argument("--draws", type=int, default=20000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--output")
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("plan-duals", help="estimate global dual prices")
    s.add_argument("--input", required=True)
    s.add_argument("--step", type=float, default=1.0)
    s.add_argument("--iterations", type=int, default=200)
    s.add_argument("--output")
    s.set_defaults(func=cmd_plan_duals)

    s = sub.add_parser("plan-rank", help="rank every impression of a planning model under its duals")
    s.add_argument("--input", required=True)
    s.add_argument("--output")
    s.set_defaults(func=cmd_plan_rank)

    s = sub.add_parser("export-lp", help="write the offline planning LP (CPLEX LP format)")
    s.add_argument("--input", required=True)
    s.add_argument("--output")
    s.set_defaults(func=cmd_export_lp)

    s = sub.add_parser("serve", help="serve POST /rank")
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--port", type=int, default=None, help=f"default: ${service.PORT_ENV} or {service.DEFAULT_PORT}")
    s.add_argument("--deadline-ms", type=float, default=service.DEFAULT_DEADLINE * 1e3)
    s.add_argument("--weight-profile", help="JSON array of slot weights for requests that send 'slots'")
    s.set_defaults(func=cmd_serve)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except _Fail as exc:
        print(f"slrank: {exc.category} error: {exc}", file=sys.stderr)
        return exc.code
    except InstanceError as exc:
        print(f"slrank: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ValueError, KeyError) as exc:
        print(f"slrank: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"slrank: io error: {exc}", file=sys.stderr)
        return EXIT_IO
    return 0


if __name__ == "__main__":
    sys.exit(main())
