import csv
import io
import json

import numpy as np
import pytest

from explorecd.datasets import synth_dataset, write_canonical
from explorecd.explore import QueryState, select_metacode
from explorecd.pipeline import (
    CURVE_HEADER,
    RunConfig,
    StepRecord,
    emit_exploration_curve,
    read_run_output,
    records_at,
    run,
    sweep,
)

FAST = dict(hidden_dim=8, epochs_init=20, epochs_step=5)


@pytest.fixture(scope="module")
def data():
    return synth_dataset(24, 3, seed=2)


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory, data):
    path = tmp_path_factory.mktemp("synth24")
    write_canonical(path, *data)
    return str(path)


def test_config_validation():
    with pytest.raises(ValueError):
        RunConfig(query_strategy="bfs")
    with pytest.raises(ValueError):
        RunConfig(eta=-1)
    with pytest.raises(ValueError):
        RunConfig(lam=float("nan"))
    with pytest.raises(ValueError):
        RunConfig(budget=3, budget_pct=10)


def test_budget_resolution():
    assert RunConfig(budget_pct=10).resolve_budget(348) == 35
    assert RunConfig(budget_pct=40).resolve_budget(348) == 139
    assert RunConfig(budget=1000).resolve_budget(50) == 50
    assert RunConfig().resolve_budget(50) == 0


def test_budget_zero_no_queries(data):
    res = run(RunConfig(budget=0, **FAST), data=data)
    assert res.records == []
    assert res.report.n_explored == 0
    assert 0.0 <= res.report.nmi <= 1.0


@pytest.mark.parametrize("strategy", ["metacode", "rs", "dfs"])
def test_full_budget_reveals_truth(data, strategy):
    hidden = data[0]
    res = run(RunConfig(budget=hidden.n_nodes, query_strategy=strategy, **FAST), data=data)
    assert res.observed.revealed_edges == set(hidden.adjacency)
    assert res.observed.inferred_edges == set()
    assert len(res.records) == hidden.n_nodes
    assert sorted(r.queried_node for r in res.records) == list(range(hidden.n_nodes))


@pytest.mark.parametrize("budget", [1, 5, 7])
def test_records_monotone_and_queries_consumed(data, budget):
    res = run(RunConfig(budget=budget, query_strategy="rs", **FAST), data=data)
    assert len(res.records) == budget
    assert [r.t for r in res.records] == list(range(1, budget + 1))
    n_ex = [r.n_explored for r in res.records]
    assert n_ex == sorted(n_ex)
    assert len(set(r.queried_node for r in res.records)) == budget
    assert all(r.wall_ms is None for r in res.records)


def test_queries_per_round(data):
    res = run(RunConfig(budget=7, queries_per_round=3, query_strategy="dfs", **FAST), data=data)
    assert len(res.records) == 7
    # records in one round share the post-round metrics
    assert res.records[0].nmi == res.records[2].nmi
    assert res.records[0].loss_final == res.records[1].loss_final


def test_byte_identical_outputs(data_dir, tmp_path):
    outs = []
    for name in ("a.jsonl", "b.jsonl"):
        cfg = RunConfig(dataset=data_dir, budget=4, out_path=str(tmp_path / name), **FAST)
        run(cfg)
        outs.append((tmp_path / name).read_bytes())
    assert outs[0] == outs[1]
    lines = [json.loads(x) for x in outs[0].decode().splitlines()]
    assert [x["type"] for x in lines] == ["step"] * 4 + ["summary"]
    assert all(x["schema"] == 1 for x in lines)
    assert "out_path" not in lines[-1]["config"]


def test_different_seed_differs(data):
    a = run(RunConfig(budget=5, query_strategy="rs", seed=0, **FAST), data=data)
    b = run(RunConfig(budget=5, query_strategy="rs", seed=1, **FAST), data=data)
    assert [r.queried_node for r in a.records] != [r.queried_node for r in b.records]


def test_missing_dataset_leaves_no_output(tmp_path):
    out = tmp_path / "x.jsonl"
    with pytest.raises(Exception):
        run(RunConfig(dataset=str(tmp_path / "missing"), budget=2, out_path=str(out), **FAST))
    # the loader fails before the output file is opened; nothing partial is left behind
    assert not out.exists()


def test_abort_after_open_is_flushed(data, tmp_path, monkeypatch):
    import explorecd.pipeline as pl

    calls = {"n": 0}
    real = pl.select

    def flaky(*a, **kw):
        calls["n"] += 1
        if calls["n"] == 3:
            raise RuntimeError("boom")
        return real(*a, **kw)

    monkeypatch.setattr(pl, "select", flaky)
    out = tmp_path / "p.jsonl"
    with pytest.raises(RuntimeError):
        run(RunConfig(budget=5, out_path=str(out), **FAST), data=data)
    lines = [json.loads(x) for x in out.read_text().splitlines()]
    assert [x["type"] for x in lines] == ["step", "step", "abort"]


def test_lambda_zero_follows_argmax_l1(data, monkeypatch):
    """With F frozen, metacode at lambda=0 is repeated argmax-L1 over unqueried nodes."""
    import explorecd.pipeline as pl

    hidden = data[0]
    rng = np.random.default_rng(0)
    f_fixed = rng.random((hidden.n_nodes, 3))
    real_train = pl.train

    def frozen(*a, **kw):
        res = real_train(*a, **kw)
        res.f = f_fixed
        return res

    monkeypatch.setattr(pl, "train", frozen)
    res = run(RunConfig(budget=10, lam=0.0, **FAST), data=data)
    expected = list(np.argsort(-f_fixed.sum(axis=1), kind="stable")[:10])
    assert [r.queried_node for r in res.records] == expected
    st_ = QueryState(hidden.n_nodes, lam=0.0)
    seq = []
    for _ in range(10):
        u = select_metacode(f_fixed, st_)
        st_.observe(u, ())
        seq.append(u)
    assert seq == expected


def test_records_at(data):
    recs = [StepRecord(t, t - 1, t, 0.0, 0.0, 0.0) for t in range(1, 11)]
    got = records_at(recs, 20, [10, 20, 50, 60])
    assert got[10].t == 2 and got[20].t == 4 and got[50].t == 10 and got[60] is None


# --------------------------------------------------------------------------- sweep


def test_sweep_mean_matches_hand_average(data_dir):
    template = RunConfig(dataset=data_dir, budget=3, query_strategy="rs", **FAST)
    rows = sweep(template, {"lam": [1.0]}, n_seeds=3)
    assert len(rows) == 1 and rows[0]["status"] == "ok"
    singles = [run(RunConfig(dataset=data_dir, budget=3, query_strategy="rs", seed=s, **FAST)) for s in range(3)]
    nmis = [r.report.nmi for r in singles]
    assert rows[0]["nmi_mean"] == pytest.approx(sum(nmis) / 3, abs=1e-15)
    assert rows[0]["nmi_std"] == pytest.approx(float(np.std(nmis)), abs=1e-15)


def test_sweep_grid_rows(data_dir):
    template = RunConfig(dataset=data_dir, **FAST)
    rows = sweep(template, {"query_strategy": ["rs", "dfs"], "budget": [1, 2]}, n_seeds=1)
    assert len(rows) == 4
    assert [(r["query_strategy"], r["budget"]) for r in rows] == [("rs", 1), ("rs", 2), ("dfs", 1), ("dfs", 2)]
    assert all(r["status"] == "ok" for r in rows)


def test_sweep_failed_cell(data_dir, tmp_path):
    template = RunConfig(budget=1, **FAST)
    rows = sweep(template, {"dataset": [data_dir, str(tmp_path / "nope")]}, n_seeds=2)
    assert rows[0]["status"] == "ok"
    assert rows[1]["status"] == "failed" and "error" in rows[1]


def test_sweep_rejects_empty_grid():
    with pytest.raises(ValueError):
        sweep(RunConfig(), {}, n_seeds=1)
    with pytest.raises(ValueError):
        sweep(RunConfig(), {"nonsense": [1]}, n_seeds=1)


def test_sweep_parallel_matches_serial(data_dir):
    template = RunConfig(dataset=data_dir, budget=2, **FAST)
    grid = {"query_strategy": ["rs", "metacode"]}
    assert sweep(template, grid, n_seeds=2, jobs=2) == sweep(template, grid, n_seeds=2, jobs=1)


# --------------------------------------------------------------------------- curves


def parse_csv(text):
    rows = list(csv.reader(io.StringIO(text)))
    assert tuple(rows[0]) == CURVE_HEADER
    return rows[1:]


def test_curve_single_run():
    recs = [StepRecord(t, 0, n, 0.0, 0.0, 0.0) for t, n in [(1, 3), (2, 5), (3, 9)]]
    rows = parse_csv(emit_exploration_curve([("rs", 10, recs)]))
    assert [float(r[2]) for r in rows] == [3, 5, 9]
    assert [float(r[0]) for r in rows] == [10, 20, 30]
    assert all(r[1] == "rs" for r in rows)


def test_curve_identical_seeds_zero_std():
    recs = [StepRecord(t, 0, 2 * t, 0.0, 0.0, 0.0) for t in range(1, 5)]
    rows = parse_csv(emit_exploration_curve([("dfs", 8, recs), ("dfs", 8, recs)]))
    assert all(float(r[3]) == 0.0 for r in rows)


def test_curve_mean_std_across_strategies():
    a = [StepRecord(1, 0, 2, 0, 0, 0)]
    b = [StepRecord(1, 0, 4, 0, 0, 0)]
    c = [StepRecord(1, 0, 7, 0, 0, 0)]
    rows = parse_csv(emit_exploration_curve([("rs", 4, a), ("rs", 4, b), ("metacode", 4, c)]))
    assert rows == [["25.0", "metacode", "7.0", "0.0"], ["25.0", "rs", "3.0", "1.0"]]


def test_curve_empty():
    assert emit_exploration_curve([]) == ",".join(CURVE_HEADER) + "\n"


def test_curve_from_run_files(data_dir, tmp_path):
    out = tmp_path / "r.jsonl"
    res = run(RunConfig(dataset=data_dir, budget=3, out_path=str(out), **FAST))
    strategy, n, steps = read_run_output(out)
    assert strategy == "metacode" and n == 24
    rows = parse_csv(emit_exploration_curve([(strategy, n, steps)]))
    assert [int(float(r[2])) for r in rows] == [r.n_explored for r in res.records]

