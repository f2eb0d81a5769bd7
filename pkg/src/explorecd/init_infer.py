"""Initial network inference from node metadata alone.

``mac_cluster`` is a multi-assignment clustering of the binary feature
matrix: a Boolean factorisation ``X ~ A o V`` with binary assignments ``A``
(N x C) and binary prototypes ``V`` (C x D), fitted by alternating coordinate
updates that minimise the Hamming error of the Boolean product.
``agm_infer`` turns the assignment into an edge set with the affiliation
graph model, and ``f_init`` composes the two into the starting observed
network.  ``knn_init`` is the metadata-similarity alternative.
"""

from __future__ import annotations

import warnings

import numpy as np

from .datasets import NodeFeatures, sample_agm_edges
from .errors import ConvergenceWarning, DegenerateInput
from .graph import ObservedNetwork


def boolean_product(assign: np.ndarray, proto: np.ndarray) -> np.ndarray:
    return (assign.astype(np.int64) @ proto.astype(np.int64)) > 0


def reconstruction_error(x: np.ndarray, assign: np.ndarray, proto: np.ndarray) -> int:
    return int(np.sum(boolean_product(assign, proto) != (np.asarray(x) > 0)))


def _hamming(rows: np.ndarray, protos: np.ndarray) -> np.ndarray:
    """Hamming distance of every row to every prototype, shape (N, C)."""
    rows = rows.astype(np.int64)
    protos = protos.astype(np.int64)
    return rows.sum(1)[:, None] + protos.sum(1)[None, :] - 2 * rows @ protos.T


def _seed_prototypes(x: np.ndarray, c: int, rng: np.random.Generator) -> np.ndarray:
    # k-means++ over Hamming distance
    n = x.shape[0]
    chosen = [int(rng.integers(n))]
    for _ in range(1, c):
        d = _hamming(x, x[chosen]).min(axis=1).astype(np.float64)
        total = d.sum()
        if total == 0:
            remaining = np.setdiff1d(np.arange(n), chosen)
            chosen.append(int(rng.choice(remaining)))
        else:
            chosen.append(int(rng.choice(n, p=d / total)))
    return x[chosen].copy()


def _assign_row(xrow: np.ndarray, proto: np.ndarray) -> np.ndarray:
    """Best single community, then greedily add communities while the row error strictly drops."""
    c = proto.shape[0]
    dist = _hamming(xrow[None, :], proto)[0]
    best = int(np.argmin(dist))  # argmin returns the lowest index on ties
    members = np.zeros(c, dtype=bool)
    members[best] = True
    recon = proto[best].copy()
    err = int(dist[best])
    while True:
        cand_err = np.array(
            [np.sum((recon | proto[k]) != xrow) if not members[k] else err for k in range(c)]
        )
        k = int(np.argmin(cand_err))
        if cand_err[k] >= err:
            return members
        members[k] = True
        recon |= proto[k]
        err = int(cand_err[k])


def _update_prototypes(x: np.ndarray, assign: np.ndarray, proto: np.ndarray) -> np.ndarray:
    proto = proto.copy()
    a = assign.astype(np.int64)
    for k in range(proto.shape[0]):
        others = np.delete(np.arange(proto.shape[0]), k)
        covered = (a[:, others] @ proto[others].astype(np.int64)) > 0 if len(others) else np.zeros_like(x)
        mine = assign[:, k]
        # error on column d only changes on rows of community k that no other prototype covers
        free = mine[:, None] & ~covered
        err_on = np.sum(free & ~x, axis=0)
        err_off = np.sum(free & x, axis=0)
        proto[k] = np.where(err_on < err_off, True, np.where(err_on > err_off, False, proto[k]))
    return proto


def _fit_once(x: np.ndarray, c: int, rng: np.random.Generator, max_iters: int, max_reseeds: int):
    proto = _seed_prototypes(x, c, rng)
    assign = np.zeros((x.shape[0], c), dtype=bool)
    reseeds = 0
    converged = False
    for _ in range(max_iters):
        new_assign = np.array([_assign_row(x[u], proto) for u in range(x.shape[0])])
        empty = np.flatnonzero(~new_assign.any(axis=0))
        if len(empty) and reseeds < max_reseeds:
            reseeds += 1
            row_err = np.sum(boolean_product(new_assign, proto) != x, axis=1)
            worst = np.argsort(-row_err, kind="stable")
            for k, u in zip(empty, worst):
                proto[k] = x[u]
            continue
        new_proto = _update_prototypes(x, new_assign, proto)
        if np.array_equal(new_assign, assign) and np.array_equal(new_proto, proto):
            converged = True
            break
        assign, proto = new_assign, new_proto
    return assign, proto, converged


def _fill_empty(x, assign, proto):
    # last resort once the reseed cap is hit: hand each empty community the
    # node it reconstructs best among nodes that belong to >1 community or,
    # failing that, the largest community's worst-fit member
    assign = assign.copy()
    for k in np.flatnonzero(~assign.any(axis=0)):
        sizes = assign.sum(axis=0)
        donors = np.flatnonzero(assign.sum(axis=1) > 1)
        if not len(donors):
            donors = np.flatnonzero(assign[:, int(np.argmax(sizes))])
            if sizes.max() <= 1:
                continue
        dist = _hamming(x[donors], proto[k:k + 1])[:, 0]
        u = donors[int(np.argmin(dist))]
        if assign[u].sum() == 1:
            assign[u] = False
        assign[u, k] = True
    return assign


def mac_cluster(x: NodeFeatures | np.ndarray, c: int, seed: int = 0, max_iters: int = 50,
                n_init: int = 8, max_reseeds: int = 10, return_prototypes: bool = False):
    """Multi-assignment clustering of binary metadata into ``c`` communities.

    Runs ``n_init`` seeded restarts and keeps the assignment with the lowest
    Hamming reconstruction error.  Every node ends up in at least one
    community and, when ``N >= c``, every community is non-empty.
    Returns an ``N x c`` 0/1 integer matrix.
    """
    bits = x.bits if isinstance(x, NodeFeatures) else np.asarray(x)
    bits = bits > 0
    n = bits.shape[0]
    if c < 1:
        raise DegenerateInput("need at least one community")
    if n < c:
        raise DegenerateInput(f"{n} nodes cannot fill {c} communities")

    rng = np.random.default_rng(seed)
    best = None
    any_converged = False
    for _ in range(n_init):
        assign, proto, converged = _fit_once(bits, c, rng, max_iters, max_reseeds)
        any_converged |= converged
        err = reconstruction_error(bits, assign, proto)
        n_empty = int((~assign.any(axis=0)).sum())
        key = (n_empty, err)
        if best is None or key < best[0]:
            best = (key, assign, proto)
    if not any_converged:
        warnings.warn(f"mac_cluster: no restart converged within {max_iters} iterations",
                      ConvergenceWarning, stacklevel=2)
    _, assign, proto = best
    assign = _fill_empty(bits, assign, proto)
    out = assign.astype(np.int64)
    return (out, proto.astype(np.int64)) if return_prototypes else out


def agm_infer(f0, seed: int = 0, threshold: bool = False) -> set[tuple[int, int]]:
    """Initial edge set: each pair kept with probability 1 - exp(-f0_u . f0_v)."""
    return sample_agm_edges(np.asarray(f0, dtype=np.float64), seed, threshold=threshold)


def f_init(x: NodeFeatures, c: int, seed: int = 0, threshold: bool = False, **mac_kw) -> ObservedNetwork:
    """Starting observed network G_0 inferred from metadata only."""
    n = x.n_nodes
    if n < 2:
        return ObservedNetwork(n)
    f0 = mac_cluster(x, c, seed=seed, **mac_kw)
    return ObservedNetwork(n, inferred_edges=agm_infer(f0, seed, threshold=threshold))


def knn_init(x: NodeFeatures | np.ndarray, k: int = 10) -> ObservedNetwork:
    """Link every node to its ``k`` most cosine-similar feature rows (symmetrised).

    Ties go to the lower node id; all-zero rows take part in no edge.
    """
    bits = np.asarray(x.bits if isinstance(x, NodeFeatures) else x, dtype=np.float64)
    n = bits.shape[0]
    if not 1 <= k < max(n, 2):
        raise ValueError(f"k must satisfy 1 <= k < N (got k={k}, N={n})")
    norms = np.linalg.norm(bits, axis=1)
    nonzero = norms > 0
    unit = np.zeros_like(bits)
    unit[nonzero] = bits[nonzero] / norms[nonzero, None]
    sim = unit @ unit.T
    edges = set()
    candidates = np.flatnonzero(nonzero)
    for u in candidates:
        others = candidates[candidates != u]
        # stable sort on -sim keeps ascending id order among ties
        order = others[np.argsort(-sim[u, others], kind="stable")]
        for v in order[:k]:
            edges.add((min(u, v), max(u, v)))
    return ObservedNetwork(n, inferred_edges={(int(a), int(b)) for a, b in edges})
