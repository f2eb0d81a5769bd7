"""Community-affiliation embedding with a two-layer graph convolutional model.

Forward pass::

    F = relu(A_hat @ relu(A_hat @ X @ W1) @ W2)

Loss on the observed network ``G_t`` (edge set ``E``) and binary metadata ``X``::

    L = - sum_{(u,v) in E} log(1 - exp(-F_u.F_v))        structure, edges
        + sum_{u<v, (u,v) not in E} F_u.F_v                structure, non-edges
        + eta * sum_{u,d} BCE(X_ud, sigmoid(F_u . W_attr[d]))

Gradients are written out by hand; :func:`gradcheck` compares them with
central finite differences.  The non-edge sum is never formed pairwise: it
is ``(|s|^2 - sum_u |F_u|^2) / 2 - sum_E F_u.F_v`` with ``s = sum_u F_u``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from .datasets import NodeFeatures
from .errors import NonFiniteLoss, ShapeMismatch
from .graph import ObservedNetwork

DOT_FLOOR = 1e-8
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
PARAM_NAMES = ("w1", "w2", "w_attr")
DENSE_ADJ_MAX_NODES = 4096


def _bits(x) -> np.ndarray:
    return x.bits if isinstance(x, NodeFeatures) else np.asarray(x, dtype=np.float64)


def _edge_index(g) -> np.ndarray:
    if isinstance(g, ObservedNetwork):
        edges = g.edges()
    else:
        edges = sorted({(min(u, v), max(u, v)) for u, v in g})
    return np.asarray(edges, dtype=np.int64).reshape(-1, 2)


# --------------------------------------------------------------------------- adjacency


def normalize_adjacency(g: ObservedNetwork, inferred_weight: float = 1.0) -> sp.csr_matrix:
    """Symmetric GCN propagation matrix D^-1/2 (A + I) D^-1/2 as CSR.

    ``inferred_weight`` scales edges that were inferred rather than revealed
    (1.0 treats both kinds identically).
    """
    n = g.n_nodes
    rows, cols, vals = [], [], []
    for (u, v), w in [(e, 1.0) for e in sorted(g.revealed_edges)] + [
        (e, float(inferred_weight)) for e in sorted(g.inferred_edges)
    ]:
        rows += [u, v]
        cols += [v, u]
        vals += [w, w]
    a = sp.csr_matrix((vals, (rows, cols)), shape=(n, n), dtype=np.float64)
    a = a + sp.identity(n, format="csr", dtype=np.float64)
    deg = np.asarray(a.sum(axis=1)).ravel()
    dinv = sp.diags(1.0 / np.sqrt(deg))
    out = (dinv @ a @ dinv).tocsr()
    out.sort_indices()
    return out


# --------------------------------------------------------------------------- parameters


@dataclass
class ModelParams:
    w1: np.ndarray
    w2: np.ndarray
    w_attr: np.ndarray
    adam_m: dict = field(default_factory=dict)
    adam_v: dict = field(default_factory=dict)
    step: int = 0

    def __post_init__(self):
        d, h = self.w1.shape
        if self.w2.shape[0] != h:
            raise ShapeMismatch(f"w2 has {self.w2.shape[0]} rows, expected hidden width {h}")
        if self.w_attr.shape != (d, self.w2.shape[1]):
            raise ShapeMismatch(f"w_attr shape {self.w_attr.shape}, expected {(d, self.w2.shape[1])}")
        for name in PARAM_NAMES:
            self.adam_m.setdefault(name, np.zeros_like(getattr(self, name)))
            self.adam_v.setdefault(name, np.zeros_like(getattr(self, name)))

    @property
    def shape(self):
        return self.w1.shape[0], self.w1.shape[1], self.w2.shape[1]

    def copy(self) -> "ModelParams":
        return ModelParams(
            self.w1.copy(), self.w2.copy(), self.w_attr.copy(),
            {k: v.copy() for k, v in self.adam_m.items()},
            {k: v.copy() for k, v in self.adam_v.items()},
            self.step,
        )

    def save(self, path) -> None:
        """Checkpoint as ``.npz`` (schema 1): weights, Adam moments and step counter."""
        arrays = {name: getattr(self, name) for name in PARAM_NAMES}
        arrays |= {f"m_{k}": v for k, v in self.adam_m.items()}
        arrays |= {f"v_{k}": v for k, v in self.adam_v.items()}
        np.savez(path, schema=np.int64(1), step=np.int64(self.step), **arrays)

    @classmethod
    def load(cls, path) -> "ModelParams":
        with np.load(path) as z:
            if int(z["schema"]) != 1:
                raise ValueError(f"unsupported checkpoint schema {int(z['schema'])}")
            return cls(
                z["w1"], z["w2"], z["w_attr"],
                {k: z[f"m_{k}"] for k in PARAM_NAMES},
                {k: z[f"v_{k}"] for k in PARAM_NAMES},
                int(z["step"]),
            )


def init_params(dim: int, hidden: int, n_communities: int, seed: int = 0) -> ModelParams:
    """Glorot-uniform weights, drawn in the order w1, w2, w_attr."""
    rng = np.random.default_rng(seed)

    def glorot(fan_in, fan_out):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-bound, bound, size=(fan_in, fan_out))

    return ModelParams(glorot(dim, hidden), glorot(hidden, n_communities), glorot(dim, n_communities))


# --------------------------------------------------------------------------- model


def gcn_forward(adj, x, p: ModelParams, return_cache: bool = False, ax=None):
    """``ax`` may carry a precomputed ``adj @ X`` (constant while the graph is fixed)."""
    xb = _bits(x)
    n = adj.shape[0]
    if xb.shape[0] != n or adj.shape != (n, n):
        raise ShapeMismatch(f"adjacency {adj.shape} vs features {xb.shape}")
    if xb.shape[1] != p.w1.shape[0]:
        raise ShapeMismatch(f"feature dim {xb.shape[1]} vs w1 rows {p.w1.shape[0]}")
    if ax is None:
        ax = adj @ xb
    pre1 = ax @ p.w1
    h1 = np.maximum(pre1, 0.0)
    ah1 = adj @ h1
    pre2 = ah1 @ p.w2
    f = np.maximum(pre2, 0.0)
    if return_cache:
        return f, {"ax": ax, "pre1": pre1, "ah1": ah1, "pre2": pre2}
    return f


def edge_prob(fu, fv) -> float:
    return float(-np.expm1(-np.dot(fu, fv)))


def attr_prob(fu, w_attr, d: int) -> float:
    return float(expit(np.dot(np.asarray(w_attr)[d], fu)))


def nonedge_sum(f: np.ndarray, edges: np.ndarray, edge_dots: np.ndarray | None = None) -> float:
    """Sum of F_u.F_v over unordered non-adjacent pairs, without the O(N^2) loop."""
    s = f.sum(axis=0)
    all_pairs = 0.5 * (s @ s - np.einsum("ij,ij->", f, f))
    if len(edges):
        if edge_dots is None:
            edge_dots = np.einsum("ij,ij->i", f[edges[:, 0]], f[edges[:, 1]])
        all_pairs -= edge_dots.sum()
    return float(all_pairs)


def nonedge_sum_naive(f: np.ndarray, edges) -> float:
    eset = {(min(u, v), max(u, v)) for u, v in np.asarray(edges).reshape(-1, 2).tolist()}
    total = 0.0
    n = f.shape[0]
    for u in range(n):
        for v in range(u + 1, n):
            if (u, v) not in eset:
                total += float(f[u] @ f[v])
    return total


def _edge_dots(f, edges):
    if f.shape[0] <= DENSE_ADJ_MAX_NODES:
        # one Gram matrix beats gathering two rows per edge on small dense graphs
        return (f @ f.T)[edges[:, 0], edges[:, 1]]
    return np.einsum("ij,ij->i", f[edges[:, 0]], f[edges[:, 1]])


def _loss_terms(f, w_attr, edges, xb, eta):
    if len(edges):
        dots = _edge_dots(f, edges)
        clamped = np.maximum(dots, DOT_FLOOR)
        l_edge = -np.sum(np.log(-np.expm1(-clamped)))
    else:
        dots = clamped = np.zeros(0)
        l_edge = 0.0
    l_nonedge = nonedge_sum(f, edges, dots)
    logits = f @ w_attr.T
    # BCE with logits: softplus(z) - x*z
    l_attr = float(np.sum(np.logaddexp(0.0, logits) - xb * logits)) if eta != 0 else 0.0
    total = l_edge + l_nonedge + eta * l_attr
    return total, dots, logits


def loss(f, w_attr, g, x, eta: float) -> float:
    """Reconstruction loss of affiliations ``f`` on graph ``g`` and metadata ``x``."""
    if eta < 0:
        raise ValueError("eta must be non-negative")
    f = np.asarray(f, dtype=np.float64)
    total, _, _ = _loss_terms(f, np.asarray(w_attr, dtype=np.float64), _edge_index(g), _bits(x), eta)
    return float(total)


def _scatter_pattern(edges: np.ndarray, n: int):
    """CSR skeleton for sum over edges of w_e * F_other, plus the slot order of its data."""
    m = len(edges)
    rows = np.concatenate([edges[:, 0], edges[:, 1]])
    cols = np.concatenate([edges[:, 1], edges[:, 0]])
    mat = sp.csr_matrix((np.arange(1, 2 * m + 1, dtype=np.float64), (rows, cols)), shape=(n, n))
    return mat, mat.data.astype(np.int64) - 1


def _loss_and_grads(p: ModelParams, adj, xb, edges, eta, scatter=None, ax=None):
    f, cache = gcn_forward(adj, xb, p, return_cache=True, ax=ax)
    total, dots, logits = _loss_terms(f, p.w_attr, edges, xb, eta)

    # dL/dF, structure part
    s = f.sum(axis=0)
    g_f = s[None, :] - f
    if len(edges):
        # d/dx -log(1-e^-x) = -1/(e^x - 1); zero below the clamp floor
        coef = np.where(dots > DOT_FLOOR, -1.0 / np.expm1(np.maximum(dots, DOT_FLOOR)), 0.0) - 1.0
        mat, slots = scatter if scatter is not None else _scatter_pattern(edges, f.shape[0])
        mat.data = np.concatenate([coef, coef])[slots]
        g_f += mat @ f

    if eta != 0:
        resid = eta * (expit(logits) - xb)
        g_f += resid @ p.w_attr
        g_wattr = resid.T @ f
    else:
        g_wattr = np.zeros_like(p.w_attr)

    g_pre2 = g_f * (cache["pre2"] > 0)
    g_w2 = cache["ah1"].T @ g_pre2
    g_h1 = adj @ (g_pre2 @ p.w2.T)  # adj is symmetric
    g_pre1 = g_h1 * (cache["pre1"] > 0)
    g_w1 = cache["ax"].T @ g_pre1
    return float(total), {"w1": g_w1, "w2": g_w2, "w_attr": g_wattr}, f


def loss_gradients(p: ModelParams, adj, x, g, eta: float) -> dict:
    """Analytic gradients of the loss through the forward pass, keyed by parameter name."""
    _, grads, _ = _loss_and_grads(p, adj, _bits(x), _edge_index(g), eta)
    return grads


def adam_step(p: ModelParams, grads: dict, lr: float = 1e-3) -> ModelParams:
    """One bias-corrected Adam update, in place; returns ``p``."""
    if lr <= 0:
        raise ValueError("learning rate must be positive")
    p.step += 1
    bc1 = 1.0 - ADAM_BETA1 ** p.step
    bc2 = 1.0 - ADAM_BETA2 ** p.step
    for name in PARAM_NAMES:
        g = grads[name]
        m = p.adam_m[name] = ADAM_BETA1 * p.adam_m[name] + (1.0 - ADAM_BETA1) * g
        v = p.adam_v[name] = ADAM_BETA2 * p.adam_v[name] + (1.0 - ADAM_BETA2) * g * g
        setattr(p, name, getattr(p, name) - lr * (m / bc1) / (np.sqrt(v / bc2) + ADAM_EPS))
    return p


@dataclass
class TrainResult:
    params: ModelParams
    f: np.ndarray
    losses: list


def train(g: ObservedNetwork, x, p0: ModelParams, eta: float = 1.0, epochs: int = 100,
          lr: float = 1e-3, seed: int = 0, adj=None) -> TrainResult:
    """Full-batch Adam on the reconstruction loss; ``p0`` is copied, not mutated.

    Training is deterministic given its inputs, so ``seed`` only exists to
    keep call sites uniform with the stochastic stages.  ``losses[i]`` is the
    loss before update ``i``; the final entry is the loss of the returned
    parameters.
    """
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    xb = _bits(x)
    adj = normalize_adjacency(g) if adj is None else adj
    if sp.issparse(adj) and adj.shape[0] <= DENSE_ADJ_MAX_NODES:
        adj = adj.toarray()
    edges = _edge_index(g)
    scatter = _scatter_pattern(edges, g.n_nodes) if len(edges) else None
    ax = adj @ xb
    p = p0.copy()
    losses = []
    for _ in range(epochs):
        value, grads, _ = _loss_and_grads(p, adj, xb, edges, eta, scatter, ax)
        if not np.isfinite(value):
            raise NonFiniteLoss(f"loss became {value} at Adam step {p.step}")
        losses.append(value)
        adam_step(p, grads, lr)
    f = gcn_forward(adj, xb, p, ax=ax)
    final = _loss_terms(f, p.w_attr, edges, xb, eta)[0]
    if not np.isfinite(final):
        raise NonFiniteLoss(f"loss became {final} after training")
    losses.append(float(final))
    return TrainResult(p, f, losses)


# --------------------------------------------------------------------------- gradient check


def _param_loss(p, adj, xb, edges, eta):
    f = gcn_forward(adj, xb, p)
    return _loss_terms(f, p.w_attr, edges, xb, eta)[0]


def numeric_gradients(p: ModelParams, adj, x, g, eta: float, step: float = 1e-5) -> dict:
    xb, edges = _bits(x), _edge_index(g)
    out = {}
    for name in PARAM_NAMES:
        w = getattr(p, name)
        grad = np.zeros_like(w)
        for idx in np.ndindex(w.shape):
            orig = w[idx]
            w[idx] = orig + step
            plus = _param_loss(p, adj, xb, edges, eta)
            w[idx] = orig - step
            minus = _param_loss(p, adj, xb, edges, eta)
            w[idx] = orig
            grad[idx] = (plus - minus) / (2 * step)
        out[name] = grad
    return out


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(np.max(np.abs(a), initial=0.0), np.max(np.abs(b), initial=0.0))
    if scale == 0:
        return 0.0
    return float(np.max(np.abs(a - b)) / scale)


def random_instance(seed: int, max_nodes=6, dim=4, n_communities=2, hidden=3, eta=None):
    """Small random (graph, features, params, eta) tuple for gradient checking."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, max_nodes + 1))
    x = (rng.random((n, dim)) < 0.5).astype(np.uint8)
    x[np.arange(n), rng.integers(dim, size=n)] = 1
    pairs = [(u, v) for u in range(n) for v in range(u + 1, n)]
    keep = rng.random(len(pairs)) < 0.5
    edges = {pr for pr, k in zip(pairs, keep) if k}
    g = ObservedNetwork(n, inferred_edges=edges)
    p = ModelParams(
        rng.uniform(0.1, 1.0, (dim, hidden)) * rng.choice([-1, 1], (dim, hidden), p=[0.2, 0.8]),
        rng.uniform(0.1, 1.0, (hidden, n_communities)) * rng.choice([-1, 1], (hidden, n_communities), p=[0.2, 0.8]),
        rng.normal(0.0, 1.0, (dim, n_communities)),
    )
    if eta is None:
        eta = float(rng.choice([0.0, 1.0, 2.0]))
    return g, NodeFeatures(x), p, eta


def gradcheck(seed: int = 0, step: float = 1e-5, **instance_kw) -> float:
    """Max relative error between analytic and finite-difference gradients on one instance."""
    g, x, p, eta = random_instance(seed, **instance_kw)
    adj = normalize_adjacency(g)
    analytic = loss_gradients(p, adj, x, g, eta)
    numeric = numeric_gradients(p, adj, x, g, eta, step=step)
    return max(relative_error(analytic[k], numeric[k]) for k in PARAM_NAMES)
