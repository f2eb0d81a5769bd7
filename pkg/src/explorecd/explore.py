"""Query-node selection: affiliation-based rule, random sampling, depth-first search."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NoCandidates
from .graph import ObservedNetwork

STRATEGIES = ("metacode", "rs", "dfs")


@dataclass
class QueryState:
    """Selection bookkeeping owned by the exploration loop."""

    n_nodes: int
    lam: float = 1.0
    seed: int = 0
    p_t: list = field(default_factory=list)
    dfs_stack: list = field(default_factory=list)

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        self.rng = np.random.default_rng(self.seed)
        self._queried = set(self.p_t)

    @property
    def queried(self) -> frozenset:
        return frozenset(self._queried)

    def unqueried(self) -> np.ndarray:
        mask = np.ones(self.n_nodes, dtype=bool)
        mask[list(self._queried)] = False
        return np.flatnonzero(mask)

    def observe(self, u: int, nbrs) -> None:
        """Record a completed query; pushes the new neighbors for DFS in ascending order."""
        u = int(u)
        if u in self._queried:
            raise ValueError(f"node {u} recorded twice")
        self.p_t.append(u)
        self._queried.add(u)
        self.dfs_stack.extend(v for v in sorted(int(v) for v in nbrs) if v not in self._queried)


def cosine_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise cosine similarity; rows with zero norm have similarity 0 to everything."""
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    dots = a @ b.T
    denom = np.outer(na, nb)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(denom > 0, dots / np.where(denom > 0, denom, 1.0), 0.0)


def metacode_scores(f: np.ndarray, queried, lam: float) -> np.ndarray:
    """Score every node: L1 mass of its affiliations plus lam times its diversity from P_t."""
    f = np.asarray(f, dtype=np.float64)
    scores = np.abs(f).sum(axis=1)
    queried = sorted(queried)
    if queried:
        mean_sim = cosine_matrix(f, f[queried]).mean(axis=1)
    else:
        mean_sim = np.zeros(f.shape[0])
    return scores + lam * (1.0 - mean_sim)


def select_metacode(f: np.ndarray, st: QueryState) -> int:
    cand = st.unqueried()
    if not len(cand):
        raise NoCandidates("every node has been queried")
    scores = metacode_scores(f, st.queried, st.lam)
    return int(cand[np.argmax(scores[cand])])  # first maximum is the lowest id


def select_random(st: QueryState, n_nodes: int | None = None) -> int:
    cand = st.unqueried()
    if not len(cand):
        raise NoCandidates("every node has been queried")
    return int(cand[st.rng.integers(len(cand))])


def select_dfs(st: QueryState, g: ObservedNetwork | None = None) -> int:
    """Pop the most recently discovered unqueried node; restart at the lowest unqueried id."""
    while st.dfs_stack:
        u = st.dfs_stack.pop()
        if u not in st._queried:
            return u
    cand = st.unqueried()
    if not len(cand):
        raise NoCandidates("every node has been queried")
    return int(cand[0])


def select(strategy: str, st: QueryState, f: np.ndarray | None = None, g: ObservedNetwork | None = None) -> int:
    if strategy == "metacode":
        return select_metacode(f, st)
    if strategy == "rs":
        return select_random(st, st.n_nodes)
    if strategy == "dfs":
        return select_dfs(st, g)
    raise ValueError(f"unknown query strategy {strategy!r}")
