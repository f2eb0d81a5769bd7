"""Exploration loop: infer G_0, then alternate training, selection and queries under a budget."""

from __future__ import annotations

import csv
import io
import itertools
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .datasets import NodeFeatures, check_pairing, load_dataset
from .embed import init_params, normalize_adjacency, train
from .explore import STRATEGIES, QueryState, select
from .graph import ObservedNetwork, QueryOracle
from .init_infer import f_init, knn_init
from .metrics import EvalReport, evaluate, explored_count

log = logging.getLogger(__name__)

SCHEMA = 1
INIT_STRATEGIES = ("mac-agm", "knn")


@dataclass
class RunConfig:
    dataset: str = ""
    fmt: str = "canonical"
    ego_id: str | None = None
    communities: int | None = None  # None: number of ground-truth communities
    budget: int | None = None
    budget_pct: float | None = None
    eta: float = 1.0
    lam: float = 1.0
    hidden_dim: int = 128
    epochs_init: int = 500
    epochs_step: int = 100
    lr: float = 0.001
    seed: int = 0
    query_strategy: str = "metacode"
    init_strategy: str = "mac-agm"
    knn_k: int = 10
    queries_per_round: int = 1
    delta: float | None = None
    out_path: str | None = None
    retrain_from_scratch: bool = False
    init_threshold: bool = False
    covered_only: bool = False
    inferred_weight: float = 1.0
    timing: bool = False

    def __post_init__(self):
        if self.query_strategy not in STRATEGIES:
            raise ValueError(f"query_strategy must be one of {STRATEGIES}")
        if self.init_strategy not in INIT_STRATEGIES:
            raise ValueError(f"init_strategy must be one of {INIT_STRATEGIES}")
        for name in ("eta", "lam", "lr", "inferred_weight"):
            val = getattr(self, name)
            if not np.isfinite(val):
                raise ValueError(f"{name} must be finite")
        if self.eta < 0 or self.lam < 0:
            raise ValueError("eta and lambda must be non-negative")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.budget is not None and self.budget_pct is not None:
            raise ValueError("give either budget or budget_pct, not both")
        if self.queries_per_round < 1 or self.epochs_init < 1 or self.epochs_step < 1:
            raise ValueError("queries_per_round and epoch counts must be >= 1")

    def resolve_budget(self, n_nodes: int) -> int:
        if self.budget is not None:
            t = int(self.budget)
        elif self.budget_pct is not None:
            t = int(np.floor(self.budget_pct * n_nodes / 100.0 + 0.5))
        else:
            t = 0
        if t < 0:
            raise ValueError("budget must be non-negative")
        return min(t, n_nodes)

    def echo(self) -> dict:
        """Config as written into outputs; the output path itself is left out."""
        out = asdict(self)
        out.pop("out_path")
        return out


@dataclass
class StepRecord:
    t: int
    queried_node: int
    n_explored: int
    loss_final: float
    nmi: float
    f1: float
    wall_ms: float | None = None

    def to_json(self) -> dict:
        return {"schema": SCHEMA, "type": "step", **asdict(self)}


@dataclass
class RunResult:
    records: list
    report: EvalReport
    config: RunConfig
    n_nodes: int
    f: np.ndarray = field(repr=False)
    observed: ObservedNetwork = field(repr=False)
    params: object = field(repr=False, default=None)

    def summary(self) -> dict:
        return {
            "schema": SCHEMA,
            "type": "summary",
            "nmi": self.report.nmi,
            "f1": self.report.f1,
            "n_explored": self.report.n_explored,
            "n_detected": self.report.n_detected,
            "n_nodes": self.n_nodes,
            "n_queries": len(self.records),
            "config": self.config.echo(),
        }


def _seeds(seed: int) -> tuple[int, int, int]:
    init_seed, param_seed, query_seed = np.random.SeedSequence(seed).generate_state(3)
    return int(init_seed), int(param_seed), int(query_seed)


def initial_network(cfg: RunConfig, x: NodeFeatures, c: int) -> ObservedNetwork:
    init_seed, _, _ = _seeds(cfg.seed)
    if cfg.init_strategy == "knn":
        return knn_init(x, min(cfg.knn_k, max(x.n_nodes - 1, 1)))
    return f_init(x, c, seed=init_seed, threshold=cfg.init_threshold)


def _dump(fh, obj):
    if fh is not None:
        fh.write(json.dumps(obj, sort_keys=True) + "\n")
        fh.flush()


def run(cfg: RunConfig, data=None) -> RunResult:
    """One full exploration run; ``data`` may pass a preloaded (hidden, features, cover)."""
    hidden, x, cover = data if data is not None else load_dataset(cfg.dataset, cfg.fmt, cfg.ego_id)
    check_pairing(hidden, x)
    truth = cover if cover is not None else hidden.truth_cover
    n = hidden.n_nodes
    c = cfg.communities or truth.c
    if not c:
        raise ValueError("number of communities unknown: ground truth is empty and --communities not set")
    budget = cfg.resolve_budget(n)
    _, param_seed, query_seed = _seeds(cfg.seed)

    fh = open(cfg.out_path, "w", encoding="utf-8", newline="\n") if cfg.out_path else None
    try:
        obs = initial_network(cfg, x, c)
        p0 = init_params(x.dim, cfg.hidden_dim, c, seed=param_seed)
        res = train(obs, x, p0, cfg.eta, cfg.epochs_init, cfg.lr, adj=normalize_adjacency(obs, cfg.inferred_weight))
        params, f = res.params, res.f
        oracle = QueryOracle(hidden, budget)
        state = QueryState(n, lam=cfg.lam, seed=query_seed)
        records = []
        log.info("G_0: %d inferred edges, budget %d of %d nodes", obs.n_edges, budget, n)

        while oracle.remaining > 0:
            start = time.perf_counter()
            picked = []
            for _ in range(min(cfg.queries_per_round, oracle.remaining)):
                u = select(cfg.query_strategy, state, f, obs)
                nbrs = oracle.query(u)
                obs.reveal(u, nbrs)
                state.observe(u, nbrs)
                picked.append((u, explored_count(obs)))
            adj = normalize_adjacency(obs, cfg.inferred_weight)
            if cfg.retrain_from_scratch:
                res = train(obs, x, p0, cfg.eta, cfg.epochs_init, cfg.lr, adj=adj)
            else:
                res = train(obs, x, params, cfg.eta, cfg.epochs_step, cfg.lr, adj=adj)
            params, f = res.params, res.f
            rep = evaluate(f, obs, truth, cfg.delta, cfg.covered_only)
            wall = (time.perf_counter() - start) * 1000.0 if cfg.timing else None
            for u, n_ex in picked:
                rec = StepRecord(len(records) + 1, u, n_ex, res.losses[-1], rep.nmi, rep.f1, wall)
                records.append(rec)
                _dump(fh, rec.to_json())
            log.debug("t=%d nmi=%.4f f1=%.4f n_ex=%d", len(records), rep.nmi, rep.f1, rep.n_explored)

        report = evaluate(f, obs, truth, cfg.delta, cfg.covered_only)
        result = RunResult(records, report, cfg, n, f, obs, params)
        _dump(fh, result.summary())
        return result
    except Exception as exc:
        _dump(fh, {"schema": SCHEMA, "type": "abort", "error": f"{type(exc).__name__}: {exc}"})
        raise
    finally:
        if fh is not None:
            fh.close()


def records_at(records, n_nodes: int, pcts) -> dict:
    """Record in effect after ``round(pct% of N)`` queries, for each checkpoint."""
    out = {}
    for pct in pcts:
        t = int(np.floor(pct * n_nodes / 100.0 + 0.5))
        out[pct] = records[t - 1] if 0 < t <= len(records) else None
    return out


# --------------------------------------------------------------------------- sweep


def _run_cell(cfg: RunConfig):
    try:
        res = run(cfg)
        return {"ok": True, "nmi": res.report.nmi, "f1": res.report.f1, "n_explored": res.report.n_explored}
    except Exception as exc:  # a failing cell must not sink the sweep
        return {"ok": False, "error": f"{type(exc).__name__}: {exc}"}


def expand_grid(grid: dict) -> list[dict]:
    if not grid:
        raise ValueError("parameter grid is empty")
    valid = {f.name for f in fields(RunConfig)}
    for key in grid:
        if key not in valid:
            raise ValueError(f"unknown RunConfig field {key!r} in grid")
    keys = list(grid)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]


def sweep(template: RunConfig, grid: dict, n_seeds: int = 3, jobs: int = 1) -> list[dict]:
    """Cross product of ``grid`` x seeds; returns one aggregate row per grid cell.

    Seeds are ``template.seed + i`` for ``i < n_seeds``.
    """
    cells = expand_grid(grid)
    jobs_list = []
    for cell in cells:
        for i in range(n_seeds):
            try:
                jobs_list.append(replace(template, **cell, seed=template.seed + i, out_path=None))
            except (TypeError, ValueError) as exc:
                jobs_list.append(exc)
    todo = [j for j in jobs_list if isinstance(j, RunConfig)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            done = list(pool.map(_run_cell, todo))
    else:
        done = [_run_cell(j) for j in todo]
    it = iter(done)
    outcomes = [next(it) if isinstance(j, RunConfig) else {"ok": False, "error": str(j)} for j in jobs_list]

    rows = []
    for ci, cell in enumerate(cells):
        runs = outcomes[ci * n_seeds:(ci + 1) * n_seeds]
        row = {k: (str(v) if isinstance(v, Path) else v) for k, v in cell.items()}
        failed = [r for r in runs if not r["ok"]]
        if failed:
            row.update(status="failed", error=failed[0]["error"], n_seeds=n_seeds)
        else:
            row["status"] = "ok"
            row["n_seeds"] = n_seeds
            for key in ("nmi", "f1", "n_explored"):
                vals = np.array([r[key] for r in runs], dtype=np.float64)
                row[f"{key}_mean"] = float(vals.mean())
                row[f"{key}_std"] = float(vals.std())
        rows.append(row)
    return rows


# --------------------------------------------------------------------------- curves

CURVE_HEADER = ("budget_pct", "strategy", "mean_n_explored", "std_n_explored")


def emit_exploration_curve(runs) -> str:
    """Aggregate N_ex by step across runs into CSV text.

    ``runs`` is an iterable of ``(strategy, n_nodes, records)`` triples (or
    :class:`RunResult` objects).  Rows are ordered by strategy, then step.
    """
    series: dict[tuple[str, int], dict[int, list[int]]] = {}
    for item in runs:
        if isinstance(item, RunResult):
            item = (item.config.query_strategy, item.n_nodes, item.records)
        strategy, n_nodes, records = item
        per_step = series.setdefault((strategy, int(n_nodes)), {})
        for rec in records:
            t = rec.t if isinstance(rec, StepRecord) else int(rec["t"])
            n_ex = rec.n_explored if isinstance(rec, StepRecord) else int(rec["n_explored"])
            per_step.setdefault(t, []).append(n_ex)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CURVE_HEADER)
    for (strategy, n_nodes), per_step in sorted(series.items()):
        for t in sorted(per_step):
            vals = np.array(per_step[t], dtype=np.float64)
            writer.writerow([round(100.0 * t / n_nodes, 6), strategy, float(vals.mean()), float(vals.std())])
    return buf.getvalue()


def read_run_output(path) -> tuple[str, int, list[dict]]:
    """Parse a run's JSON-lines file into ``(strategy, n_nodes, step dicts)``."""
    steps, summary = [], None
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            if obj.get("type") == "step":
                steps.append(obj)
            elif obj.get("type") == "summary":
                summary = obj
    if summary is None:
        raise ValueError(f"{path}: no summary line (aborted run?)")
    return summary["config"]["query_strategy"], summary["n_nodes"], steps

