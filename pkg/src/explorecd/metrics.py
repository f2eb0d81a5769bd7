"""Evaluation of detected covers against ground truth."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .graph import CommunityCover, ObservedNetwork

EPS_FLOOR = 1e-8


@dataclass(frozen=True)
class EvalReport:
    nmi: float
    f1: float
    n_detected: int
    n_explored: int


def background_threshold(n_nodes: int, n_edges: int) -> float:
    """Membership threshold sqrt(-log(1 - eps)) with eps the observed edge density.

    eps is clipped into [1e-8, 1 - 1e-8] so empty and complete graphs stay finite.
    """
    if n_nodes < 2:
        eps = EPS_FLOOR
    else:
        eps = 2.0 * n_edges / (n_nodes * (n_nodes - 1))
    eps = min(max(eps, EPS_FLOOR), 1.0 - EPS_FLOOR)
    return math.sqrt(-math.log1p(-eps))


def cover_from_affiliations(f: np.ndarray, g: ObservedNetwork | None = None, delta: float | None = None) -> CommunityCover:
    f = np.asarray(f, dtype=np.float64)
    n, c = f.shape
    if delta is None:
        delta = background_threshold(n, g.n_edges if g is not None else 0)
    member = f >= delta
    orphans = ~member.any(axis=1)
    if orphans.any():
        member[np.flatnonzero(orphans), np.argmax(f[orphans], axis=1)] = True
    comms = [frozenset(np.flatnonzero(member[:, k]).tolist()) for k in range(c)]
    kept = tuple(cm for cm in comms if cm)
    return CommunityCover(kept, detected=True, n_empty=c - len(kept))


def _incidence(cover: CommunityCover, n_nodes: int) -> np.ndarray:
    m = np.zeros((cover.c, n_nodes), dtype=bool)
    for k, com in enumerate(cover.communities):
        m[k, list(com)] = True
    return m


def _h(p):
    p = np.asarray(p, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(p > 0, -p * np.log2(np.where(p > 0, p, 1.0)), 0.0)


def _hb(k1, k0, m):
    """Binary entropy of the split (k1, k0) of m items; 0 where m == 0."""
    safe = np.where(m > 0, m, 1.0)
    return np.where(m > 0, _h(k1 / safe) + _h(k0 / safe), 0.0)


def _conditional_entropy_norm(x: np.ndarray, y: np.ndarray, n: int) -> float:
    """Mean normalised H(X_k | Y) over the communities of X (LFK)."""
    if x.shape[0] == 0:
        return 0.0
    xs = x.astype(np.float64)
    ys = y.astype(np.float64)
    n11 = xs @ ys.T
    n10 = xs.sum(1)[:, None] - n11
    n01 = ys.sum(1)[None, :] - n11
    n00 = n - n11 - n10 - n01
    p11, p10, p01, p00 = n11 / n, n10 / n, n01 / n, n00 / n
    h11, h10, h01, h00 = _h(p11), _h(p10), _h(p01), _h(p00)
    px = xs.sum(1) / n
    hx = _h(px) + _h(1 - px)
    # H(X_k | Y_l) as sum_y p(y) H(X_k | Y_l = y); exactly 0 when X_k == Y_l
    ny1 = ys.sum(1)[None, :]
    ny0 = n - ny1
    cond = (ny1 / n) * _hb(n11, n01, ny1) + (ny0 / n) * _hb(n10, n00, ny0)
    valid = (h11 + h00) >= (h01 + h10)
    cond = np.where(valid, cond, np.inf)
    best = cond.min(axis=1) if cond.shape[1] else np.full(x.shape[0], np.inf)
    out = np.empty(x.shape[0])
    for k in range(x.shape[0]):
        if hx[k] == 0:
            out[k] = 0.0
        elif not np.isfinite(best[k]):
            out[k] = 1.0
        else:
            out[k] = min(max(best[k] / hx[k], 0.0), 1.0)
    return float(out.mean())


def overlapping_nmi(a: CommunityCover, b: CommunityCover, n_nodes: int) -> float:
    """Lancichinetti-Fortunato-Kertesz overlapping NMI of two covers over ``n_nodes`` nodes."""
    if a.c == 0 or b.c == 0:
        return 1.0 if a.c == b.c == 0 else 0.0
    x, y = _incidence(a, n_nodes), _incidence(b, n_nodes)
    value = 1.0 - 0.5 * (_conditional_entropy_norm(x, y, n_nodes) + _conditional_entropy_norm(y, x, n_nodes))
    return min(max(value, 0.0), 1.0)


def _pairwise_f1(a: CommunityCover, b: CommunityCover) -> np.ndarray:
    nodes = sorted(a.covered_nodes() | b.covered_nodes())
    index = {u: i for i, u in enumerate(nodes)}
    ma = np.zeros((a.c, len(nodes)))
    mb = np.zeros((b.c, len(nodes)))
    for k, com in enumerate(a.communities):
        ma[k, [index[u] for u in com]] = 1
    for k, com in enumerate(b.communities):
        mb[k, [index[u] for u in com]] = 1
    inter = ma @ mb.T
    sizes = ma.sum(1)[:, None] + mb.sum(1)[None, :]
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(sizes > 0, 2 * inter / np.where(sizes > 0, sizes, 1), 0.0)


def best_match_f1(a: CommunityCover, b: CommunityCover) -> float:
    if a.c == 0 or b.c == 0:
        return 0.0
    table = _pairwise_f1(a, b)
    return float(0.5 * (table.max(axis=1).mean() + table.max(axis=0).mean()))


def explored_count(g: ObservedNetwork) -> int:
    explored = set(g.queried_set)
    for u, v in g.revealed_edges:
        explored.add(u)
        explored.add(v)
    return len(explored)


def restrict_cover(cover: CommunityCover, nodes) -> CommunityCover:
    """Keep only ``nodes`` (renumbered densely in ascending order)."""
    order = sorted(nodes)
    index = {u: i for i, u in enumerate(order)}
    comms = [frozenset(index[u] for u in com if u in index) for com in cover.communities]
    kept = tuple(c for c in comms if c)
    return CommunityCover(kept, detected=cover.detected, n_empty=cover.n_empty + len(comms) - len(kept))


def evaluate(f: np.ndarray, g: ObservedNetwork, truth: CommunityCover, delta: float | None = None,
             covered_only: bool = False) -> EvalReport:
    detected = cover_from_affiliations(f, g, delta)
    n = g.n_nodes
    if covered_only:
        nodes = truth.covered_nodes()
        truth_eval, det_eval, n_eval = restrict_cover(truth, nodes), restrict_cover(detected, nodes), len(nodes)
    else:
        truth_eval, det_eval, n_eval = truth, detected, n
    return EvalReport(
        nmi=overlapping_nmi(det_eval, truth_eval, n_eval),
        f1=best_match_f1(det_eval, truth_eval),
        n_detected=detected.c,
        n_explored=explored_count(g),
    )
