"""Hidden ground-truth network, query oracle and the observed network G_t.

The hidden network is only reachable through :class:`QueryOracle` (for the
exploration loop) and through its ``truth_cover`` (for evaluation).  The
observed network is what the embedder trains on: edges revealed by queries
plus initially inferred edges that have not yet been overridden.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Iterable

from .errors import BudgetExhausted, DuplicateQuery, InvariantViolation, UnknownNode

Edge = tuple[int, int]


def norm_edge(u: int, v: int) -> Edge:
    return (u, v) if u < v else (v, u)


def _normalize_edges(edges: Iterable, n_nodes: int, what: str) -> set[Edge]:
    out = set()
    for u, v in edges:
        u, v = int(u), int(v)
        if u == v:
            raise InvariantViolation(f"{what}: self-loop on node {u}")
        for x in (u, v):
            if not 0 <= x < n_nodes:
                raise UnknownNode(f"{what}: node {x} outside 0..{n_nodes - 1}")
        out.add(norm_edge(u, v))
    return out


@dataclass(frozen=True)
class CommunityCover:
    """Overlapping assignment of nodes to communities.

    ``detected`` marks covers produced by the detector; only those may carry
    a non-zero ``n_empty`` (communities that ended up with no members and
    were dropped).
    """

    communities: tuple[frozenset[int], ...]
    detected: bool = False
    n_empty: int = 0

    def __post_init__(self):
        object.__setattr__(
            self, "communities", tuple(frozenset(int(u) for u in c) for c in self.communities)
        )
        if not self.detected and any(len(c) == 0 for c in self.communities):
            raise InvariantViolation("empty community in a ground-truth cover")

    @property
    def c(self) -> int:
        return len(self.communities)

    def covered_nodes(self) -> frozenset[int]:
        return frozenset().union(*self.communities) if self.communities else frozenset()

    def check_range(self, n_nodes: int) -> None:
        for com in self.communities:
            for u in com:
                if not 0 <= u < n_nodes:
                    raise UnknownNode(f"community member {u} outside 0..{n_nodes - 1}")


class HiddenNetwork:
    """Undirected, unweighted true graph with its ground-truth cover."""

    def __init__(self, n_nodes: int, edges: Iterable, truth_cover: CommunityCover | None = None):
        self.n_nodes = int(n_nodes)
        self.adjacency: frozenset[Edge] = frozenset(_normalize_edges(edges, self.n_nodes, "hidden"))
        self.truth_cover = truth_cover if truth_cover is not None else CommunityCover(())
        self.truth_cover.check_range(self.n_nodes)
        nbrs: list[set[int]] = [set() for _ in range(self.n_nodes)]
        for u, v in self.adjacency:
            nbrs[u].add(v)
            nbrs[v].add(u)
        self._nbrs = tuple(frozenset(s) for s in nbrs)

    def neighbors(self, u: int) -> frozenset[int]:
        return self._nbrs[u]

    def degree(self, u: int) -> int:
        return len(self._nbrs[u])

    def __eq__(self, other):
        if not isinstance(other, HiddenNetwork):
            return NotImplemented
        return (
            self.n_nodes == other.n_nodes
            and self.adjacency == other.adjacency
            and self.truth_cover == other.truth_cover
        )

    def __repr__(self):
        return (
            f"HiddenNetwork(n_nodes={self.n_nodes}, n_edges={len(self.adjacency)}, "
            f"c={self.truth_cover.c})"
        )


class QueryOracle:
    """Simulated data acquisition: each query reveals one node's true neighbors."""

    def __init__(self, hidden: HiddenNetwork, budget: int):
        if budget < 0:
            raise ValueError("budget must be non-negative")
        self.hidden = hidden
        self.budget = int(budget)
        self.queried: list[int] = []
        self._seen: set[int] = set()

    @property
    def remaining(self) -> int:
        return self.budget - len(self.queried)

    def query(self, u: int) -> frozenset[int]:
        u = int(u)
        if not 0 <= u < self.hidden.n_nodes:
            raise UnknownNode(f"node {u} outside 0..{self.hidden.n_nodes - 1}")
        if u in self._seen:
            raise DuplicateQuery(f"node {u} was already queried")
        if len(self.queried) >= self.budget:
            raise BudgetExhausted(f"query budget of {self.budget} exhausted")
        self.queried.append(u)
        self._seen.add(u)
        return self.hidden.neighbors(u)


def oracle_query(oracle: QueryOracle, u: int) -> frozenset[int]:
    return oracle.query(u)


@dataclass
class ObservedNetwork:
    """The discovered network G_t: revealed edges, inferred edges, queried set."""

    n_nodes: int
    revealed_edges: set[Edge] = field(default_factory=set)
    inferred_edges: set[Edge] = field(default_factory=set)
    queried_set: set[int] = field(default_factory=set)

    def __post_init__(self):
        self.revealed_edges = _normalize_edges(self.revealed_edges, self.n_nodes, "revealed")
        self.inferred_edges = _normalize_edges(self.inferred_edges, self.n_nodes, "inferred")
        self.queried_set = {int(u) for u in self.queried_set}
        self.validate()

    def validate(self) -> None:
        if self.revealed_edges & self.inferred_edges:
            raise InvariantViolation("an edge is both revealed and inferred")
        for u in self.queried_set:
            if not 0 <= u < self.n_nodes:
                raise UnknownNode(f"queried node {u} outside 0..{self.n_nodes - 1}")
        q = self.queried_set
        for u, v in self.revealed_edges:
            if u not in q and v not in q:
                raise InvariantViolation(f"revealed edge {(u, v)} touches no queried node")
        for u, v in self.inferred_edges:
            if u in q or v in q:
                raise InvariantViolation(f"inferred edge {(u, v)} touches a queried node")

    def reveal(self, u: int, nbrs: Iterable[int]) -> "ObservedNetwork":
        """Apply a query response in place and return ``self``."""
        u = int(u)
        nbrs = [int(v) for v in nbrs]
        for x in [u, *nbrs]:
            if not 0 <= x < self.n_nodes:
                raise UnknownNode(f"node {x} outside 0..{self.n_nodes - 1}")
        if u in self.queried_set:
            raise DuplicateQuery(f"node {u} is already in the queried set")
        self.inferred_edges = {e for e in self.inferred_edges if u not in e}
        new = _normalize_edges(((u, v) for v in nbrs), self.n_nodes, "revealed")
        self.revealed_edges |= new
        self.queried_set.add(u)
        return self

    def copy(self) -> "ObservedNetwork":
        return copy.deepcopy(self)

    def edges(self) -> list[Edge]:
        return sorted(self.revealed_edges | self.inferred_edges)

    @property
    def n_edges(self) -> int:
        return len(self.revealed_edges) + len(self.inferred_edges)


def observed_update(g: ObservedNetwork, u: int, nbrs: Iterable[int]) -> ObservedNetwork:
    """Functional form of :meth:`ObservedNetwork.reveal`; ``g`` is untouched."""
    return g.copy().reveal(u, nbrs)


def edge_list(g: ObservedNetwork) -> list[Edge]:
    return g.edges()
