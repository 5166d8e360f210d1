"""Command-line entry points.

Exit codes: 0 on success, 2 when a config or region fails validation,
1 on any other runtime error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from .errors import MatchlabError, ValidationError
from .geo import compute_catchments, estimate_alpha_beta, f_alpha_beta, validate_region
from .harness import (
    build_region,
    emit_figure_data,
    fmt,
    load_json,
    parse_config,
    run_bins_experiment,
    run_experiment,
    sweep_cutoff,
)
from .lowerbound import CounterexampleSpec, tradeoff_experiment


def _load_config(args):
    """Config from --config, with --repair-metric folded in so it lands in metadata."""
    doc = load_json(args.config)
    if getattr(args, "repair_metric", False):
        doc["repair_metric"] = True
    return parse_config(doc)


def _cmd_validate(args) -> int:
    config = _load_config(args)
    region = build_region(config.region_spec, config.repair)
    report = validate_region(region)
    if report.ok:
        print(f"ok: {region.n} nodes, {len(region.foodbanks)} food banks")
        return 0
    for err in report.errors:
        print(f"invalid: {err}", file=sys.stderr)
    return 2


def _cmd_run(args) -> int:
    config = _load_config(args)
    bundle = run_experiment(config)
    emit_figure_data(bundle)
    for spec in config.algorithms:
        agg = bundle.aggregate(spec.label)
        print(
            f"{spec.label}: max_menvy={agg['max_menvy']:.6g} mean_menvy={agg['mean_menvy']:.6g} "
            f"max_reldist={agg['max_reldist']:.6g} mean_reldist={agg['mean_reldist']:.6g}"
        )
    print(f"wrote {config.out_dir}")
    return 0


def _parse_cutoffs(text: str) -> list[float]:
    out = []
    for tok in text.split(","):
        tok = tok.strip()
        out.append(math.inf if tok == "max" else float(tok))
    return out


def _cmd_sweep(args) -> int:
    config = _load_config(args)
    path = sweep_cutoff(config, _parse_cutoffs(args.c))
    print(f"wrote {path}")
    return 0


def _cmd_ballsbins(args) -> int:
    path = run_bins_experiment(load_json(args.config))
    print(f"wrote {path.parent}")
    return 0


def _cmd_lowerbound(args) -> int:
    report = tradeoff_experiment(
        CounterexampleSpec(n=args.n, delta=args.delta), m=args.m, runs=args.runs, seed=args.seed
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "tradeoff.csv", "w", encoding="utf-8") as fh:
        fh.write("algorithm,run,deliveries_to_a,max_menvy,max_reldist\n")
        for row in report.rows:
            fh.write(
                f"{row.algorithm},{row.run},{row.deliveries_to_a},"
                f"{fmt(row.max_menvy)},{fmt(row.max_reldist)}\n"
            )
    for algo in ("driver_optimal", "two_choice"):
        print(
            f"{algo}: mean_deliveries_to_A={report.mean_deliveries_to_a(algo):.6g} "
            f"mean_max_menvy={report.mean_max_menvy(algo):.6g} "
            f"mean_max_reldist={report.mean_max_reldist(algo):.6g}"
        )
    print(f"wrote {out / 'tradeoff.csv'}")
    return 0


def _cmd_alphabeta(args) -> int:
    config = _load_config(args)
    region = build_region(config.region_spec, config.repair)
    catchment = compute_catchments(region)
    bias = estimate_alpha_beta(region, catchment)
    f = f_alpha_beta(bias.alpha, bias.beta)
    out = {
        "alpha": bias.alpha,
        "beta": bias.beta,
        "f_alpha_beta": "inf" if math.isinf(f) else f,
    }
    print(json.dumps(out, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="matchlab")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="validate a config and its region")
    p.add_argument("--config", required=True)
    p.add_argument("--repair-metric", action="store_true", dest="repair_metric",
                   help="replace distances by their shortest-path closure")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("run", help="run a matching experiment bundle")
    p.add_argument("--config", required=True)
    p.add_argument("--repair-metric", action="store_true", dest="repair_metric")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("sweep-cutoff", help="greedy-with-cutoff Pareto sweep")
    p.add_argument("--config", required=True)
    p.add_argument("--c", required=True, help="comma-separated miles, e.g. 0,10,60,max")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("ballsbins", help="balls-into-bins gap/potential traces")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_cmd_ballsbins)

    p = sub.add_parser("lowerbound", help="hard-instance tradeoff experiment")
    p.add_argument("--n", type=int, default=50)
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--m", type=int, default=100000)
    p.add_argument("--runs", type=int, default=100)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_lowerbound)

    p = sub.add_parser("alphabeta", help="bias constants of a region's populations")
    p.add_argument("--config", required=True)
    p.add_argument("--repair-metric", action="store_true", dest="repair_metric")
    p.set_defaults(func=_cmd_alphabeta)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 2
    except MatchlabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
