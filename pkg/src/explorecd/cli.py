"""Command-line entry point: ``explorecd {run,sweep,curve,convert,synth,gradcheck}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import __version__
from .datasets import load_ego_network, synth_dataset, write_canonical
from .embed import gradcheck
from .explore import STRATEGIES
from .pipeline import INIT_STRATEGIES, RunConfig, emit_exploration_curve, read_run_output, run, sweep


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _optional(conv):
    return lambda text: None if text.lower() in ("none", "null", "") else conv(text)


# converters for --grid values, keyed by RunConfig field
FIELD_TYPES = {
    "dataset": str, "fmt": str, "ego_id": _optional(str), "communities": _optional(int),
    "budget": _optional(int), "budget_pct": _optional(float), "eta": float, "lam": float,
    "hidden_dim": int, "epochs_init": int, "epochs_step": int, "lr": float, "seed": int,
    "query_strategy": str, "init_strategy": str, "knn_k": int, "queries_per_round": int,
    "delta": _optional(float), "out_path": _optional(str), "retrain_from_scratch": _bool,
    "init_threshold": _bool, "covered_only": _bool, "inferred_weight": float, "timing": _bool,
}
GRID_ALIASES = {"lambda": "lam", "init": "init_strategy", "format": "fmt", "strategy": "query_strategy"}


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dataset", required=True, help="dataset directory, or <dir>/<ego> for --format ego")
    p.add_argument("--format", dest="fmt", choices=("ego", "canonical"), default="canonical")
    p.add_argument("--ego-id", help="ego id when --dataset is the SNAP directory")
    p.add_argument("--communities", type=int, help="number of communities (default: ground-truth count)")
    budget = p.add_mutually_exclusive_group()
    budget.add_argument("--budget-pct", type=float, help="query budget as a percentage of N")
    budget.add_argument("--budget", type=int, help="absolute query budget")
    p.add_argument("--eta", type=float, default=1.0, help="weight of the metadata reconstruction term")
    p.add_argument("--lambda", dest="lam", type=float, default=1.0, help="weight of the diversity term")
    p.add_argument("--hidden-dim", type=int, default=128)
    p.add_argument("--epochs-init", type=int, default=500)
    p.add_argument("--epochs-step", type=int, default=100)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--query-strategy", choices=STRATEGIES, default="metacode")
    p.add_argument("--init", dest="init_strategy", choices=INIT_STRATEGIES, default="mac-agm")
    p.add_argument("--knn-k", type=int, default=10)
    p.add_argument("--queries-per-round", type=int, default=1)
    p.add_argument("--delta", type=float, help="fixed membership threshold (default: from edge density)")
    p.add_argument("--retrain-from-scratch", action="store_true",
                   help="retrain from the initial weights each round instead of warm-starting")
    p.add_argument("--init-threshold", action="store_true",
                   help="keep AGM pairs with p >= 0.5 instead of sampling G_0")
    p.add_argument("--covered-only", action="store_true",
                   help="evaluate only nodes that belong to some ground-truth community")
    p.add_argument("--timing", action="store_true", help="record wall_ms (output is then not reproducible)")


def _config(args, **over) -> RunConfig:
    names = {f.name for f in fields(RunConfig)}
    kw = {k: v for k, v in vars(args).items() if k in names}
    kw.update(over)
    return RunConfig(**kw)


def cmd_run(args) -> int:
    cfg = _config(args, out_path=args.out)
    result = run(cfg)
    if args.checkpoint:
        result.params.save(args.checkpoint)
    if not args.out:
        for rec in result.records:
            print(json.dumps(rec.to_json(), sort_keys=True))
        print(json.dumps(result.summary(), sort_keys=True))
    else:
        s = result.summary()
        print(f"nmi={s['nmi']:.4f} f1={s['f1']:.4f} n_explored={s['n_explored']} queries={s['n_queries']}",
              file=sys.stderr)
    return 0


def parse_grid(items) -> dict:
    grid = {}
    for item in items:
        key, _, values = item.partition("=")
        key = GRID_ALIASES.get(key.strip().replace("-", "_"), key.strip().replace("-", "_"))
        if key not in FIELD_TYPES or not values:
            raise SystemExit(f"bad --grid entry {item!r} (expected field=v1,v2,...)")
        grid[key] = [FIELD_TYPES[key](v.strip()) for v in values.split(",")]
    return grid


def cmd_sweep(args) -> int:
    template = _config(args, out_path=None)
    rows = sweep(template, parse_grid(args.grid), n_seeds=args.seeds, jobs=args.jobs)
    text = "".join(json.dumps({"schema": 1, "type": "cell", **r}, sort_keys=True) + "\n" for r in rows)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0 if all(r["status"] == "ok" for r in rows) else 1


def cmd_curve(args) -> int:
    text = emit_exploration_curve(read_run_output(p) for p in args.runs)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_convert(args) -> int:
    hidden, feats, cover = load_ego_network(args.ego_dir, args.ego_id)
    write_canonical(args.out, hidden, feats, cover)
    print(f"wrote {args.out}: N={hidden.n_nodes} E={len(hidden.adjacency)} D={feats.dim} C={cover.c}",
          file=sys.stderr)
    return 0


def cmd_synth(args) -> int:
    hidden, feats, cover = synth_dataset(args.nodes, args.communities, seed=args.seed, weight=args.weight,
                                         overlap=args.overlap)
    write_canonical(args.out, hidden, feats, cover)
    print(f"wrote {args.out}: N={hidden.n_nodes} E={len(hidden.adjacency)} D={feats.dim} C={cover.c}",
          file=sys.stderr)
    return 0


def cmd_gradcheck(args) -> int:
    errs = np.array([gradcheck(args.seed + i, step=args.step) for i in range(args.instances)])
    worst = int(np.argmax(errs))
    ok = bool(errs.max() < args.tol)
    print(f"instances={args.instances} max_rel_err={errs.max():.3e} (seed {args.seed + worst}) "
          f"tol={args.tol:g} {'PASS' if ok else 'FAIL'}")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="explorecd", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="one exploration run; JSON lines out")
    _add_run_flags(p)
    p.add_argument("--out", help="JSON-lines output file (default: stdout)")
    p.add_argument("--checkpoint", help="save the final model parameters (.npz)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="grid x seeds, mean/std per cell")
    _add_run_flags(p)
    p.add_argument("--grid", action="append", default=[], required=True,
                   help="field=v1,v2,... (repeatable), e.g. --grid lambda=0,1,2")
    p.add_argument("--seeds", type=int, default=3)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("curve", help="aggregate N_ex per step from run outputs into CSV")
    p.add_argument("runs", nargs="+", help="JSON-lines files written by 'run --out'")
    p.add_argument("--out")
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("convert", help="SNAP ego network -> canonical directory")
    p.add_argument("--ego-dir", required=True)
    p.add_argument("--ego-id", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("synth", help="write a synthetic AGM dataset in canonical format")
    p.add_argument("--nodes", type=int, default=50)
    p.add_argument("--communities", type=int, default=3)
    p.add_argument("--weight", type=float, default=1.0, help="affiliation weight of each membership")
    p.add_argument("--overlap", type=float, default=0.15, help="fraction of nodes in a second community")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("gradcheck", help="analytic vs finite-difference gradients on random instances")
    p.add_argument("--instances", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--step", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
