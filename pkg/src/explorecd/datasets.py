"""Dataset ingestion: SNAP ego networks, the canonical TSV format, synthetic AGM graphs.

Canonical directory layout::

    meta.json         {"schema": 1, "n_nodes": N, "dim": D}
    edges.tsv         u<TAB>v                       one undirected edge per line
    features.tsv      u<TAB>i,j,k                   indices of the one-bits of row u
    communities.tsv   community-id<TAB>u,v,w        members of one community

Every loader returns ``(HiddenNetwork, NodeFeatures, CommunityCover)`` with
node ids remapped to ``0..N-1``.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DatasetWarning, InconsistentDims, MissingFile, ParseError, UnknownNode
from .graph import CommunityCover, HiddenNetwork

CANONICAL_SCHEMA = 1


@dataclass(frozen=True, eq=False)
class NodeFeatures:
    """Binary node metadata, one row per node."""

    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits)
        if bits.ndim != 2:
            raise InconsistentDims("<features>", 0, f"expected a 2-D matrix, got shape {bits.shape}")
        if bits.size and not np.isin(bits, (0, 1)).all():
            raise ValueError("node features must be binary")
        bits = bits.astype(np.float64)
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    @property
    def n_nodes(self) -> int:
        return self.bits.shape[0]

    @property
    def dim(self) -> int:
        return self.bits.shape[1]

    def __eq__(self, other):
        if not isinstance(other, NodeFeatures):
            return NotImplemented
        return self.bits.shape == other.bits.shape and bool(np.array_equal(self.bits, other.bits))


def _read_lines(path: Path):
    if not path.exists():
        raise MissingFile(f"missing dataset file: {path}")
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if line.strip():
                yield lineno, line


def _parse_bits(tokens, path, lineno):
    try:
        vals = [int(t) for t in tokens]
    except ValueError:
        raise ParseError(path, lineno, f"non-integer feature value in {' '.join(tokens)!r}") from None
    if any(v not in (0, 1) for v in vals):
        raise ParseError(path, lineno, "feature values must be 0 or 1")
    return vals


# --------------------------------------------------------------------------- SNAP ego


def load_ego_network(directory, ego_id) -> tuple[HiddenNetwork, NodeFeatures, CommunityCover]:
    """Load one SNAP ego network (``<ego>.edges/.feat/.egofeat/.circles``).

    Alters are renumbered ``0..N-2`` in ascending order of their original id;
    the ego becomes node ``N-1`` and is linked to every alter.
    """
    directory = Path(directory)
    ego = str(ego_id)
    paths = {ext: directory / f"{ego}.{ext}" for ext in ("edges", "feat", "egofeat", "circles")}
    for p in paths.values():
        if not p.exists():
            raise MissingFile(f"missing dataset file: {p}")

    feat_rows: dict[int, list[int]] = {}
    dim = None
    for lineno, line in _read_lines(paths["feat"]):
        tokens = line.split()
        try:
            node = int(tokens[0])
        except ValueError:
            raise ParseError(paths["feat"], lineno, f"bad node id {tokens[0]!r}") from None
        bits = _parse_bits(tokens[1:], paths["feat"], lineno)
        if dim is None:
            dim = len(bits)
        elif len(bits) != dim:
            raise InconsistentDims(paths["feat"], lineno, f"expected {dim} features, got {len(bits)}")
        feat_rows[node] = bits

    ego_bits = None
    for lineno, line in _read_lines(paths["egofeat"]):
        if ego_bits is not None:
            raise ParseError(paths["egofeat"], lineno, "more than one ego feature line")
        ego_bits = _parse_bits(line.split(), paths["egofeat"], lineno)
    if ego_bits is None:
        raise ParseError(paths["egofeat"], 1, "empty ego feature file")
    if dim is None:
        dim = len(ego_bits)
    elif len(ego_bits) != dim:
        raise InconsistentDims(paths["egofeat"], 1, f"expected {dim} features, got {len(ego_bits)}")

    raw_edges = []
    for lineno, line in _read_lines(paths["edges"]):
        tokens = line.split()
        if len(tokens) != 2:
            raise ParseError(paths["edges"], lineno, f"expected 'u v', got {line!r}")
        try:
            raw_edges.append((int(tokens[0]), int(tokens[1])))
        except ValueError:
            raise ParseError(paths["edges"], lineno, f"non-integer node id in {line!r}") from None

    ego_orig = int(ego) if ego.lstrip("-").isdigit() else None
    alters = set(feat_rows)
    for u, v in raw_edges:
        alters.update((u, v))
    alters.discard(ego_orig)
    order = sorted(alters)
    remap = {orig: i for i, orig in enumerate(order)}
    ego_new = len(order)
    if ego_orig is not None:
        remap[ego_orig] = ego_new
    n = ego_new + 1

    edges = [(remap[u], remap[v]) for u, v in raw_edges if u != v]
    edges.extend((a, ego_new) for a in range(ego_new))

    bits = np.zeros((n, dim), dtype=np.uint8)
    for orig, row in feat_rows.items():
        bits[remap[orig]] = row
    bits[ego_new] = ego_bits

    communities = []
    for lineno, line in _read_lines(paths["circles"]):
        tokens = line.split()
        members = set()
        for tok in tokens[1:]:
            try:
                orig = int(tok)
            except ValueError:
                raise ParseError(paths["circles"], lineno, f"bad member id {tok!r}") from None
            if orig not in remap:
                raise ParseError(paths["circles"], lineno, f"circle member {orig} is not in the network")
            members.add(remap[orig])
        if members:
            communities.append(frozenset(members))
    if not communities:
        warnings.warn(f"{paths['circles']}: no circles, ground truth cover is empty", DatasetWarning)

    cover = CommunityCover(tuple(communities))
    return HiddenNetwork(n, edges, cover), NodeFeatures(bits), cover


# --------------------------------------------------------------------------- canonical


def load_canonical(directory) -> tuple[HiddenNetwork, NodeFeatures, CommunityCover]:
    directory = Path(directory)
    meta_path = directory / "meta.json"
    if not meta_path.exists():
        raise MissingFile(f"missing dataset file: {meta_path}")
    try:
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        n, dim = int(meta["n_nodes"]), int(meta["dim"])
    except (ValueError, KeyError, TypeError) as exc:
        raise ParseError(meta_path, 1, f"bad meta.json: {exc}") from None

    def node(tok, path, lineno):
        try:
            u = int(tok)
        except ValueError:
            raise ParseError(path, lineno, f"bad node id {tok!r}") from None
        if not 0 <= u < n:
            raise ParseError(path, lineno, f"node {u} outside 0..{n - 1}")
        return u

    def id_list(field, path, lineno):
        return [t for t in field.split(",") if t.strip()] if field else []

    path = directory / "edges.tsv"
    edges = set()
    for lineno, line in _read_lines(path):
        parts = line.split("\t")
        if len(parts) != 2:
            raise ParseError(path, lineno, f"expected 'u<TAB>v', got {line!r}")
        u, v = node(parts[0], path, lineno), node(parts[1], path, lineno)
        if u == v:
            raise ParseError(path, lineno, f"self-loop on node {u}")
        edges.add((min(u, v), max(u, v)))

    path = directory / "features.tsv"
    bits = np.zeros((n, dim), dtype=np.uint8)
    for lineno, line in _read_lines(path):
        parts = line.split("\t")
        if len(parts) > 2:
            raise ParseError(path, lineno, f"expected 'u<TAB>idx,...', got {line!r}")
        u = node(parts[0], path, lineno)
        for tok in id_list(parts[1] if len(parts) == 2 else "", path, lineno):
            try:
                d = int(tok)
            except ValueError:
                raise ParseError(path, lineno, f"bad feature index {tok!r}") from None
            if not 0 <= d < dim:
                raise InconsistentDims(path, lineno, f"feature index {d} outside 0..{dim - 1}")
            bits[u, d] = 1

    path = directory / "communities.tsv"
    communities = []
    for lineno, line in _read_lines(path):
        parts = line.split("\t")
        if len(parts) != 2:
            raise ParseError(path, lineno, f"expected 'id<TAB>u,v,...', got {line!r}")
        members = frozenset(node(t, path, lineno) for t in id_list(parts[1], path, lineno))
        if members:
            communities.append(members)
    if not communities:
        warnings.warn(f"{path}: no communities, ground truth cover is empty", DatasetWarning)

    cover = CommunityCover(tuple(communities))
    return HiddenNetwork(n, edges, cover), NodeFeatures(bits), cover


def write_canonical(directory, hidden: HiddenNetwork, features: NodeFeatures, cover: CommunityCover | None = None):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    cover = hidden.truth_cover if cover is None else cover
    if features.n_nodes != hidden.n_nodes:
        raise InconsistentDims("<features>", 0, "feature rows do not match node count")
    meta = {"schema": CANONICAL_SCHEMA, "n_nodes": hidden.n_nodes, "dim": features.dim}
    (directory / "meta.json").write_text(json.dumps(meta, sort_keys=True) + "\n", encoding="utf-8")
    with open(directory / "edges.tsv", "w", encoding="utf-8", newline="\n") as fh:
        for u, v in sorted(hidden.adjacency):
            fh.write(f"{u}\t{v}\n")
    with open(directory / "features.tsv", "w", encoding="utf-8", newline="\n") as fh:
        for u in range(features.n_nodes):
            idx = np.flatnonzero(features.bits[u])
            fh.write(f"{u}\t{','.join(str(int(d)) for d in idx)}\n")
    with open(directory / "communities.tsv", "w", encoding="utf-8", newline="\n") as fh:
        for k, com in enumerate(cover.communities):
            fh.write(f"{k}\t{','.join(str(u) for u in sorted(com))}\n")
    return directory


def load_dataset(path, fmt: str = "canonical", ego_id=None):
    """Dispatch on format tag (``ego`` or ``canonical``)."""
    path = Path(path)
    if fmt == "canonical":
        return load_canonical(path)
    if fmt == "ego":
        if ego_id is None:
            # accept "<dir>/<ego>" or "<dir>/<ego>.edges"
            ego_id = path.name.split(".")[0]
            path = path.parent
        return load_ego_network(path, ego_id)
    raise ValueError(f"unknown dataset format {fmt!r}")


def one_hot(column_values) -> np.ndarray:
    """One-hot encode a categorical column into a binary block (converter helper)."""
    values = list(column_values)
    cats = sorted(set(values), key=str)
    index = {c: i for i, c in enumerate(cats)}
    out = np.zeros((len(values), len(cats)), dtype=np.uint8)
    for row, val in enumerate(values):
        out[row, index[val]] = 1
    return out


# --------------------------------------------------------------------------- synthetic


def agm_edge_probabilities(f0) -> np.ndarray:
    """Upper-triangle (u<v) AGM edge probabilities 1 - exp(-F_u . F_v), row-major order."""
    f0 = np.asarray(f0, dtype=np.float64)
    iu, iv = np.triu_indices(f0.shape[0], k=1)
    dots = np.einsum("ij,ij->i", f0[iu], f0[iv])
    return -np.expm1(-dots)


def sample_agm_edges(f0, seed, threshold: bool = False) -> set[tuple[int, int]]:
    """Sample each unordered pair independently with its AGM probability.

    With ``threshold=True`` the pair is kept iff its probability is >= 0.5.
    """
    f0 = np.asarray(f0, dtype=np.float64)
    if (f0 < 0).any():
        raise ValueError("affiliation weights must be non-negative")
    n = f0.shape[0]
    iu, iv = np.triu_indices(n, k=1)
    p = agm_edge_probabilities(f0)
    if threshold:
        keep = p >= 0.5
    else:
        keep = np.random.default_rng(seed).random(p.shape[0]) < p
    keep &= p > 0
    return {(int(u), int(v)) for u, v in zip(iu[keep], iv[keep])}


def synth_agm(f0, seed) -> HiddenNetwork:
    """Draw a hidden network from the AGM; ground truth is the column supports of ``f0``."""
    f0 = np.asarray(f0, dtype=np.float64)
    edges = sample_agm_edges(f0, seed)
    cover = CommunityCover(tuple(frozenset(np.flatnonzero(f0[:, c] > 0).tolist()) for c in range(f0.shape[1])
                                 if (f0[:, c] > 0).any()))
    return HiddenNetwork(f0.shape[0], edges, cover)


def random_affiliations(n_nodes, n_communities, seed, overlap=0.15, weight=1.0) -> np.ndarray:
    """Random binary-support affiliation matrix: each node joins one community, some join two."""
    rng = np.random.default_rng(seed)
    f0 = np.zeros((n_nodes, n_communities))
    f0[np.arange(n_nodes), rng.integers(n_communities, size=n_nodes)] = weight
    extra = rng.random(n_nodes) < overlap
    f0[np.flatnonzero(extra), rng.integers(n_communities, size=int(extra.sum()))] = weight
    return f0


def synth_features(f0, dim_per_community=6, noise_dims=4, p_in=0.6, p_noise=0.05, seed=0) -> NodeFeatures:
    """Community-correlated binary metadata for a synthetic affiliation matrix.

    Each community owns ``dim_per_community`` features that its members carry
    with probability ``p_in``; every other bit flips on with ``p_noise``.
    """
    f0 = np.asarray(f0)
    rng = np.random.default_rng(seed)
    n, c = f0.shape
    dim = c * dim_per_community + noise_dims
    prob = np.full((n, dim), p_noise)
    for k in range(c):
        members = f0[:, k] > 0
        prob[np.ix_(members, np.arange(k * dim_per_community, (k + 1) * dim_per_community))] = p_in
    return NodeFeatures((rng.random((n, dim)) < prob).astype(np.uint8))


def synth_dataset(n_nodes=50, n_communities=3, seed=0, weight=1.0, overlap=0.15, **feature_kw):
    """Synthetic AGM network with correlated features, for demos and tests."""
    f0 = random_affiliations(n_nodes, n_communities, seed, overlap=overlap, weight=weight)
    hidden = synth_agm(f0, seed)
    feats = synth_features(f0, seed=seed + 1, **feature_kw)
    return hidden, feats, hidden.truth_cover


def check_pairing(hidden: HiddenNetwork, features: NodeFeatures) -> None:
    if features.n_nodes != hidden.n_nodes:
        raise UnknownNode(f"{features.n_nodes} feature rows for {hidden.n_nodes} nodes")
