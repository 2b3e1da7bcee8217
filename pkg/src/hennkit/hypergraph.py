"""Hypergraphs, their graph expansions, and graph shift operators.

A hypergraph is stored as a list of node-index sets with positive weights.
From it we build the incidence matrix B (n x m), the degree diagonals, the
four classical graph expansions (clique, line, star, bipartite) and the
symmetric positive semi-definite shift operators used by the learning stack.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import AssumptionError, ConfigError

GSO_KINDS = (
    "clique-henn",
    "line-henn",
    "hgnn",
    "hgnn-plus",
    "normalized-laplacian",
    "adjacency-normalized",
    "custom",
)

# Relative tolerances for shift-operator sanity checks (double precision
# eigensolver noise floor).
SYMMETRY_RTOL = 1e-10
PSD_RTOL = 1e-9


class Hypergraph:
    """Immutable hypergraph with ``n`` nodes and ``m`` weighted hyperedges.

    Parameters
    ----------
    n : int
        Number of nodes; node indices live in ``[0, n)``.
    edges : sequence of node-index collections
        One collection per hyperedge, each with >= 2 distinct nodes.
    weights : array-like of shape (m,), optional
        Positive hyperedge weights (defaults to all ones).

    Every node must belong to at least one hyperedge; all downstream
    normalizations divide by degrees, so isolated nodes are rejected here
    rather than padded.
    """

    __slots__ = ("n", "edges", "weights")

    def __init__(self, n: int, edges: Iterable[Iterable[int]], weights=None):
        if n < 1:
            raise ConfigError(f"node count must be positive, got {n}")
        canon = []
        for e in edges:
            members = tuple(sorted(int(i) for i in e))
            if len(set(members)) != len(members):
                raise ConfigError(f"duplicate node in hyperedge {members}")
            if len(members) < 2:
                raise ConfigError(f"hyperedge {members} has cardinality < 2")
            if members[0] < 0 or members[-1] >= n:
                raise ConfigError(f"hyperedge {members} has node index outside [0, {n})")
            canon.append(members)
        if not canon:
            raise ConfigError("hypergraph must have at least one hyperedge")
        if weights is None:
            w = np.ones(len(canon))
        else:
            w = np.array(weights, dtype=float)
        if w.shape != (len(canon),):
            raise ConfigError(f"expected {len(canon)} weights, got shape {w.shape}")
        if not np.all(w > 0):
            raise ConfigError("all hyperedge weights must be positive")
        covered = set()
        for e in canon:
            covered.update(e)
        missing = sorted(set(range(n)) - covered)
        if missing:
            raise ConfigError(f"nodes {missing} belong to no hyperedge")
        self.n = int(n)
        self.edges = tuple(canon)
        self.weights = w
        w.setflags(write=False)

    @property
    def m(self) -> int:
        return len(self.edges)

    def __repr__(self):
        return f"Hypergraph(n={self.n}, m={self.m})"

    def permute_nodes(self, perm: Sequence[int]) -> "Hypergraph":
        """Relabel nodes: node ``i`` becomes ``perm[i]``."""
        perm = list(perm)
        return Hypergraph(self.n, [[perm[i] for i in e] for e in self.edges], self.weights)

    def permute_edges(self, perm: Sequence[int]) -> "Hypergraph":
        """Reorder hyperedges: edge ``j`` moves to position ``perm[j]``."""
        inv = np.argsort(np.asarray(perm))
        return Hypergraph(
            self.n,
            [self.edges[j] for j in inv],
            self.weights[inv],
        )

    def dual(self) -> "Hypergraph":
        """Swap roles of nodes and hyperedges (unit weights on the dual).

        Nodes with a single membership would yield singleton dual edges;
        those cannot affect any expansion's off-diagonal and are dropped.
        """
        dual_edges = [
            [j for j, e in enumerate(self.edges) if i in e] for i in range(self.n)
        ]
        dual_edges = [d for d in dual_edges if len(d) >= 2]
        return Hypergraph(self.m, dual_edges)


@dataclass(frozen=True)
class DegreeMatrices:
    """Diagonals of the node-degree, edge-size and edge-intersection matrices."""

    node_degrees: np.ndarray
    edge_sizes: np.ndarray
    edge_intersection_degrees: np.ndarray


@dataclass(eq=False)
class ShiftOperator:
    """A symmetric shift operator tagged with its construction recipe.

    The ``spectrum`` attribute is populated lazily by
    :func:`hennkit.spectral.eigendecompose` and must not be set by hand.
    """

    matrix: np.ndarray
    kind: str = "custom"
    spectrum: object = None

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ConfigError(f"shift operator must be square, got shape {m.shape}")
        if self.kind not in GSO_KINDS:
            raise ConfigError(f"unknown shift operator kind {self.kind!r}")
        scale = np.linalg.norm(m)
        asym = np.linalg.norm(m - m.T)
        if asym > SYMMETRY_RTOL * max(scale, 1e-300):
            raise AssumptionError(
                f"matrix is not symmetric: |S - S^T| = {asym:.3e} vs scale {scale:.3e}"
            )
        # Exact symmetry downstream (eigh only reads one triangle anyway).
        self.matrix = 0.5 * (m + m.T)
        self.matrix.setflags(write=False)

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def requires_psd(self) -> bool:
        # The normalized adjacency is indefinite for any graph with an edge;
        # it is exposed for inspection only and exempt like ``custom``.
        return self.kind not in ("custom", "adjacency-normalized")


def incidence(h: Hypergraph) -> np.ndarray:
    """Node-hyperedge incidence matrix B with B[i, j] = 1 iff node i in edge j."""
    b = np.zeros((h.n, h.m))
    for j, e in enumerate(h.edges):
        b[list(e), j] = 1.0
    return b


def degree_matrices(h: Hypergraph) -> DegreeMatrices:
    """Weighted node degrees, hyperedge sizes and line-graph degrees.

    The edge-intersection degree of hyperedge j is
    ``sum_k w_k |e_j n e_k|`` including the self term ``w_j |e_j|``, so the
    normalized line-side operator has spectral radius on the same scale as
    the clique side.
    """
    b = incidence(h)
    node = b @ h.weights
    sizes = b.sum(axis=0)
    inter = (b.T @ b) @ h.weights
    return DegreeMatrices(node, sizes, inter)


def clique_expansion(h: Hypergraph) -> np.ndarray:
    """Weighted adjacency of the clique expansion (off-diagonal of B W B^T)."""
    b = incidence(h)
    a = (b * h.weights) @ b.T
    np.fill_diagonal(a, 0.0)
    return a


def line_graph(h: Hypergraph) -> np.ndarray:
    """Adjacency of the line graph: edge (j, k) weighted by |e_j n e_k|."""
    b = incidence(h)
    a = b.T @ b
    np.fill_diagonal(a, 0.0)
    return a


def bipartite_expansion(h: Hypergraph) -> np.ndarray:
    """Adjacency on n + m vertices joining node i to hyperedge-vertex n + j."""
    a = np.zeros((h.n + h.m, h.n + h.m))
    b = incidence(h) * h.weights
    a[: h.n, h.n :] = b
    a[h.n :, : h.n] = b.T
    return a


def star_expansion(h: Hypergraph):
    """Star expansion: one vertex per (node, hyperedge) incidence pair.

    Two pair-vertices are adjacent iff they share the node or the hyperedge.
    Returns ``(adjacency, pairs)`` where ``pairs[p] = (node, edge)``.
    """
    pairs = [(i, j) for j, e in enumerate(h.edges) for i in e]
    p = len(pairs)
    a = np.zeros((p, p))
    for u in range(p):
        for v in range(u + 1, p):
            if pairs[u][0] == pairs[v][0] or pairs[u][1] == pairs[v][1]:
                a[u, v] = a[v, u] = 1.0
    return a, pairs


def _check_positive_degrees(deg: np.ndarray, what: str):
    bad = np.flatnonzero(deg <= 0)
    if bad.size:
        raise AssumptionError(f"{what} {bad[0]} has zero degree; cannot normalize")


def gso(h: Hypergraph, kind: str) -> ShiftOperator:
    """Build a shift operator of the given kind from a hypergraph.

    clique-henn      D_v^{-1/2} B W B^T D_v^{-1/2}           (size n)
    line-henn        D_ee^{-1/2} W^{1/2} B^T B W^{1/2} D_ee^{-1/2}   (size m)
    hgnn             D_v^{-1/2} B W D_e^{-1} B^T D_v^{-1/2}  (size n)
    hgnn-plus        symmetrized D_v^{-1} B W D_e^{-1} B^T   (size n)

    The line-henn normalization applies W symmetrically as W^{1/2} on both
    sides; it coincides with one-sided weighting when W = I and keeps the
    operator PSD for any positive weights (see also :func:`raw_line_operator`).
    The hgnn-plus operator is symmetrized by the similarity transform
    D_v^{1/2} (.) D_v^{-1/2}, which lands on the hgnn matrix itself.
    """
    b = incidence(h)
    d = degree_matrices(h)
    if kind == "clique-henn":
        _check_positive_degrees(d.node_degrees, "node")
        inv = 1.0 / np.sqrt(d.node_degrees)
        s = (inv[:, None] * ((b * h.weights) @ b.T)) * inv[None, :]
    elif kind == "line-henn":
        _check_positive_degrees(d.edge_intersection_degrees, "hyperedge")
        sw = np.sqrt(h.weights)
        inv = 1.0 / np.sqrt(d.edge_intersection_degrees)
        core = (sw[:, None] * (b.T @ b)) * sw[None, :]
        s = (inv[:, None] * core) * inv[None, :]
    elif kind in ("hgnn", "hgnn-plus"):
        _check_positive_degrees(d.node_degrees, "node")
        inv = 1.0 / np.sqrt(d.node_degrees)
        core = ((b * (h.weights / d.edge_sizes)) @ b.T)
        s = (inv[:, None] * core) * inv[None, :]
    else:
        raise ConfigError(f"cannot build kind {kind!r} from a hypergraph")
    return ShiftOperator(s, kind)


def raw_line_operator(h: Hypergraph) -> np.ndarray:
    """One-sided line normalization D_ee^{-1/2} B^T B W D_ee^{-1/2}.

    Asymmetric for non-uniform weights; exposed for comparison against the
    symmetric line-henn operator (they coincide when W = I).
    """
    b = incidence(h)
    d = degree_matrices(h)
    inv = 1.0 / np.sqrt(d.edge_intersection_degrees)
    return (inv[:, None] * ((b.T @ b) * h.weights)) * inv[None, :]


def _component_count(adjacency: np.ndarray) -> int:
    ncomp, _ = connected_components(csr_matrix(adjacency != 0), directed=False)
    return int(ncomp)


def normalized_laplacian(adjacency: np.ndarray) -> ShiftOperator:
    """I - D^{-1/2} A D^{-1/2} of a connected, nonnegatively weighted graph."""
    a = np.asarray(adjacency, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ConfigError(f"adjacency must be square, got {a.shape}")
    if np.any(a < 0):
        raise ConfigError("negative edge weights are not supported")
    if not np.allclose(a, a.T):
        raise ConfigError("adjacency must be symmetric")
    ncomp = _component_count(a)
    if ncomp != 1:
        raise AssumptionError(f"graph is disconnected ({ncomp} components)")
    deg = a.sum(axis=1)
    inv = 1.0 / np.sqrt(deg)
    lap = np.eye(a.shape[0]) - (inv[:, None] * a) * inv[None, :]
    return ShiftOperator(lap, "normalized-laplacian")


def normalized_adjacency(adjacency: np.ndarray) -> ShiftOperator:
    """D^{-1/2} A D^{-1/2}; symmetric but indefinite, inspection only."""
    lap = normalized_laplacian(adjacency)
    return ShiftOperator(np.eye(lap.size) - lap.matrix, "adjacency-normalized")


def load_hg(path) -> Hypergraph:
    """Read the ``.hg`` text format.

    Line 1 holds ``n m``; each of the following m lines holds
    ``weight cardinality i_1 ... i_k`` with zero-based node indices.
    ``#`` starts a comment.
    """
    with open(path, "r", encoding="utf-8") as fh:
        rows = []
        for lineno, raw in enumerate(fh, start=1):
            text = raw.split("#", 1)[0].strip()
            if text:
                rows.append((lineno, text))
    if not rows:
        raise ConfigError(f"{path}: empty hypergraph file")
    header = rows[0][1].split()
    if len(header) != 2:
        raise ConfigError(f"{path}:{rows[0][0]}: header must be 'n m'")
    n, m = int(header[0]), int(header[1])
    if len(rows) - 1 != m:
        raise ConfigError(f"{path}: header promises {m} hyperedges, found {len(rows) - 1}")
    edges, weights = [], []
    for lineno, text in rows[1:]:
        parts = text.split()
        try:
            w = float(parts[0])
            k = int(parts[1])
            members = [int(tok) for tok in parts[2:]]
        except (ValueError, IndexError) as exc:
            raise ConfigError(f"{path}:{lineno}: malformed hyperedge line") from exc
        if len(members) != k:
            raise ConfigError(f"{path}:{lineno}: cardinality {k} but {len(members)} indices")
        edges.append(members)
        weights.append(w)
    return Hypergraph(n, edges, weights)


def save_hg(h: Hypergraph, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{h.n} {h.m}\n")
        for e, w in zip(h.edges, h.weights):
            fh.write(f"{float(w)!r} {len(e)} " + " ".join(str(i) for i in e) + "\n")
