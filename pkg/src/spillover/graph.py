"""
Weighted undirected interaction graphs.

Graphs are stored in CSR form over dense internal indices ``0..n-1``; the
external (user) ids live in ``node_ids`` and are kept sorted so the
external/internal mapping is deterministic. Self-loops are rejected here;
the clustering code keeps its own contracted representation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np
import scipy.sparse as sp

MAX_NODE_ID = 2**63 - 1


class GraphFormatError(ValueError):
    """Raised when an edge-list style file cannot be parsed."""

    def __init__(self, message: str, path=None, lineno: int | None = None):
        where = ""
        if path is not None:
            where = f"{path}:"
        if lineno is not None:
            where += f"{lineno}: "
        elif where:
            where += " "
        super().__init__(where + message)
        self.lineno = lineno


class WeightedGraph:
    """Immutable undirected graph with strictly positive edge weights.

    Parameters
    ----------
    node_ids : array_like of int
        External ids, strictly increasing.
    adjacency : scipy.sparse.csr_matrix
        Symmetric ``n x n`` weight matrix with an empty diagonal.

    Use :meth:`from_edges` rather than calling the constructor directly.
    """

    def __init__(self, node_ids, adjacency: sp.csr_matrix):
        node_ids = np.asarray(node_ids, dtype=np.int64)
        adjacency = sp.csr_matrix(adjacency, dtype=np.float64)
        adjacency.sum_duplicates()
        adjacency.eliminate_zeros()
        adjacency.sort_indices()
        n = len(node_ids)
        if adjacency.shape != (n, n):
            raise ValueError(f"adjacency shape {adjacency.shape} does not match {n} nodes")
        if n > 1 and np.any(np.diff(node_ids) <= 0):
            raise ValueError("node_ids must be strictly increasing")
        self._ids = node_ids
        self._ids.setflags(write=False)
        self._adj = adjacency
        self._degrees = np.asarray(adjacency.sum(axis=1)).ravel()
        self._degrees.setflags(write=False)

    # -- construction -----------------------------------------------------

    @classmethod
    def from_edges(cls, src, dst, weight=None, nodes: Iterable[int] | None = None) -> "WeightedGraph":
        """Build a graph from parallel arrays of external ids.

        Each ``(src[i], dst[i])`` pair adds ``weight[i]`` (default 1.0) to the
        undirected edge between them, so ``(1, 2)`` and ``(2, 1)`` accumulate
        into one edge. Zero weights are dropped; self-loops and negative
        weights raise ``ValueError``.
        """
        src = np.asarray(src, dtype=np.int64).ravel()
        dst = np.asarray(dst, dtype=np.int64).ravel()
        if weight is None:
            weight = np.ones(len(src))
        weight = np.asarray(weight, dtype=np.float64).ravel()
        if not (len(src) == len(dst) == len(weight)):
            raise ValueError("src, dst and weight must have equal length")
        if np.any(src == dst):
            raise ValueError("self-loops are not allowed")
        if np.any(weight < 0) or not np.all(np.isfinite(weight)):
            raise ValueError("edge weights must be finite and non-negative")
        if np.any(src < 0) or np.any(dst < 0):
            raise ValueError("node ids must be non-negative")

        keep = weight > 0
        extra = np.asarray(list(nodes) if nodes is not None else [], dtype=np.int64)
        ids = np.unique(np.concatenate([src[keep], dst[keep], extra]))
        n = len(ids)
        u = np.searchsorted(ids, src[keep])
        v = np.searchsorted(ids, dst[keep])
        lo, hi = np.minimum(u, v), np.maximum(u, v)
        upper = sp.coo_matrix((weight[keep], (lo, hi)), shape=(n, n)).tocsr()
        upper.sum_duplicates()
        return cls(ids, upper + upper.T)

    @classmethod
    def empty(cls) -> "WeightedGraph":
        return cls(np.zeros(0, dtype=np.int64), sp.csr_matrix((0, 0)))

    # -- basic accessors --------------------------------------------------

    @property
    def node_ids(self) -> np.ndarray:
        return self._ids

    @property
    def n(self) -> int:
        return len(self._ids)

    @property
    def degrees(self) -> np.ndarray:
        """Weighted degrees ``k_i``, indexed by internal node index."""
        return self._degrees

    @property
    def m(self) -> float:
        """Total edge weight (each undirected edge counted once)."""
        return float(self._degrees.sum()) / 2.0

    @property
    def num_edges(self) -> int:
        return self._adj.nnz // 2

    @property
    def adjacency(self) -> sp.csr_matrix:
        # Shared, callers must not mutate.
        return self._adj

    @property
    def indptr(self) -> np.ndarray:
        return self._adj.indptr

    @property
    def indices(self) -> np.ndarray:
        return self._adj.indices

    @property
    def weights(self) -> np.ndarray:
        return self._adj.data

    def index_of(self, node_id: int) -> int:
        """Internal index of an external node id (``KeyError`` if absent)."""
        pos = int(np.searchsorted(self._ids, node_id))
        if pos >= self.n or self._ids[pos] != node_id:
            raise KeyError(node_id)
        return pos

    def indices_of(self, node_ids) -> np.ndarray:
        node_ids = np.asarray(node_ids, dtype=np.int64)
        pos = np.searchsorted(self._ids, node_ids)
        pos_c = np.minimum(pos, max(self.n - 1, 0))
        if self.n == 0 or np.any(self._ids[pos_c] != node_ids):
            missing = node_ids if self.n == 0 else node_ids[self._ids[pos_c] != node_ids]
            raise KeyError(f"unknown node ids: {missing[:5].tolist()}")
        return pos

    def neighbors(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """``(neighbor indices, weights)`` of internal node ``i``."""
        a, b = self._adj.indptr[i], self._adj.indptr[i + 1]
        return self._adj.indices[a:b], self._adj.data[a:b]

    def edges(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Each undirected edge once as ``(u, v, w)`` with ``u < v`` (internal indices)."""
        upper = sp.triu(self._adj, k=1).tocoo()
        order = np.lexsort((upper.col, upper.row))
        return upper.row[order].astype(np.int64), upper.col[order].astype(np.int64), upper.data[order]

    def scaled(self, factor: float) -> "WeightedGraph":
        if factor <= 0:
            raise ValueError("factor must be positive")
        return WeightedGraph(self._ids.copy(), self._adj * factor)

    def __eq__(self, other) -> bool:
        if not isinstance(other, WeightedGraph):
            return NotImplemented
        if not np.array_equal(self._ids, other._ids):
            return False
        diff = self._adj != other._adj
        return diff.nnz == 0

    def __repr__(self) -> str:
        return f"WeightedGraph(n={self.n}, edges={self.num_edges}, m={self.m:g})"


@dataclass(frozen=True)
class BehaviorWeights:
    """Importance weight per behavior type (follow, comment, share, ...)."""

    weights: Mapping[int, float] = field(default_factory=dict)

    def __post_init__(self):
        items = dict(self.weights)
        for d, w in items.items():
            if not np.isfinite(w) or w < 0:
                raise ValueError(f"behavior {d}: weight must be finite and non-negative, got {w}")
        if not items:
            raise ValueError("at least one behavior weight is required")
        if all(w == 0 for w in items.values()):
            raise ValueError("all behavior weights zero")
        object.__setattr__(self, "weights", items)

    @property
    def num_behaviors(self) -> int:
        return len(self.weights)

    def __getitem__(self, d: int) -> float:
        return self.weights[d]

    def __contains__(self, d) -> bool:
        return d in self.weights


# -- edge-list I/O ----------------------------------------------------------


def _data_lines(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            yield lineno, line.split()


def _parse_id(tok: str, path, lineno: int) -> int:
    try:
        value = int(tok)
    except ValueError:
        raise GraphFormatError(f"invalid node id {tok!r}", path, lineno) from None
    if value < 0 or value > MAX_NODE_ID:
        raise GraphFormatError(f"node id {value} out of range", path, lineno)
    return value


def _parse_float(tok: str, what: str, path, lineno: int) -> float:
    try:
        value = float(tok)
    except ValueError:
        raise GraphFormatError(f"invalid {what} {tok!r}", path, lineno) from None
    if not np.isfinite(value):
        raise GraphFormatError(f"{what} must be finite", path, lineno)
    if value < 0:
        raise GraphFormatError(f"negative {what} {value}", path, lineno)
    return value


def load_edge_list(path, directed_input: bool = False) -> WeightedGraph:
    """Read ``src dst [weight]`` lines into a :class:`WeightedGraph`.

    Repeated pairs are summed. With ``directed_input`` the two directions
    ``i->j`` and ``j->i`` are interaction strengths that add up to a single
    undirected weight; undirected input treats a reversed pair as the same
    edge, so both modes accumulate identically.
    """
    src, dst, wts = [], [], []
    for lineno, fields in _data_lines(path):
        if len(fields) not in (2, 3):
            raise GraphFormatError(f"expected 'src dst [weight]', got {len(fields)} fields", path, lineno)
        u = _parse_id(fields[0], path, lineno)
        v = _parse_id(fields[1], path, lineno)
        if u == v:
            raise GraphFormatError(f"self-loop on node {u}", path, lineno)
        w = _parse_float(fields[2], "weight", path, lineno) if len(fields) == 3 else 1.0
        src.append(u)
        dst.append(v)
        wts.append(w)
    if not src:
        return WeightedGraph.empty()
    return WeightedGraph.from_edges(src, dst, wts)


def build_multi_behavior(path, weights: BehaviorWeights) -> WeightedGraph:
    """Aggregate ``src dst behavior strength`` lines as ``W_ij = sum_d w_d * s_ij^(d)``."""
    if not isinstance(weights, BehaviorWeights):
        weights = BehaviorWeights(weights)
    src, dst, wts = [], [], []
    for lineno, fields in _data_lines(path):
        if len(fields) != 4:
            raise GraphFormatError(
                f"expected 'src dst behavior_id strength', got {len(fields)} fields", path, lineno
            )
        u = _parse_id(fields[0], path, lineno)
        v = _parse_id(fields[1], path, lineno)
        if u == v:
            raise GraphFormatError(f"self-loop on node {u}", path, lineno)
        try:
            d = int(fields[2])
        except ValueError:
            raise GraphFormatError(f"invalid behavior id {fields[2]!r}", path, lineno) from None
        if d not in weights:
            raise GraphFormatError(f"unknown behavior id {d}", path, lineno)
        s = _parse_float(fields[3], "strength", path, lineno)
        src.append(u)
        dst.append(v)
        wts.append(weights[d] * s)
    if not src:
        return WeightedGraph.empty()
    return WeightedGraph.from_edges(src, dst, wts)


def write_edge_list(g: WeightedGraph, path) -> None:
    """Write each edge once as ``min_id max_id weight``, sorted by id pair."""
    u, v, w = g.edges()
    a, b = g.node_ids[u], g.node_ids[v]
    order = np.lexsort((b, a))
    with open(path, "w", encoding="utf-8") as fh:
        for i in order:
            fh.write(f"{a[i]} {b[i]} {float(w[i])!r}\n")


# -- generators -------------------------------------------------------------


def watts_strogatz(n: int, k: int, p: float, seed: int = 0, max_tries: int = 100) -> WeightedGraph:
    """Seeded Watts-Strogatz small-world graph with unit weights.

    Starts from a ring where every node links to its ``k`` nearest
    neighbours, then rewires each lattice edge ``(u, v)`` with probability
    ``p`` to ``(u, w)`` for a uniform ``w``. Candidates that would create a
    self-loop or duplicate edge are redrawn up to ``max_tries`` times, after
    which the original edge is kept, so the edge count is always ``n*k/2``.
    """
    if k % 2 != 0:
        raise ValueError(f"k must be even, got {k}")
    if not 0 < k < n:
        raise ValueError(f"need 0 < k < n, got k={k}, n={n}")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must be in [0, 1], got {p}")

    rng = np.random.default_rng(seed)
    adj = [set() for _ in range(n)]
    for u in range(n):
        for j in range(1, k // 2 + 1):
            v = (u + j) % n
            adj[u].add(v)
            adj[v].add(u)

    if p > 0:
        # Same sweep order as the classic construction: offset-major, then node.
        for j in range(1, k // 2 + 1):
            coins = rng.random(n)
            for u in range(n):
                if coins[u] >= p:
                    continue
                v = (u + j) % n
                if v not in adj[u]:
                    continue  # already rewired away from this slot
                for _ in range(max_tries):
                    w = int(rng.integers(n))
                    if w != u and w not in adj[u]:
                        adj[u].discard(v)
                        adj[v].discard(u)
                        adj[u].add(w)
                        adj[w].add(u)
                        break

    src = [u for u in range(n) for v in adj[u] if u < v]
    dst = [v for u in range(n) for v in adj[u] if u < v]
    return WeightedGraph.from_edges(src, dst, nodes=range(n))


def planted_partition(block_sizes, p_in: float, p_out: float, seed: int = 0) -> tuple[WeightedGraph, np.ndarray]:
    """Stochastic block model with unit weights; returns ``(graph, block label per node)``.

    Node ids are ``0..n-1`` and every node is kept even if isolated.
    """
    block_sizes = np.asarray(block_sizes, dtype=np.int64)
    if np.any(block_sizes < 1):
        raise ValueError("block sizes must be positive")
    if not (0 <= p_in <= 1 and 0 <= p_out <= 1):
        raise ValueError("probabilities must be in [0, 1]")
    rng = np.random.default_rng(seed)
    blocks = np.repeat(np.arange(len(block_sizes)), block_sizes)
    n = len(blocks)
    src, dst = [], []
    # Row-by-row upper triangle keeps memory at O(n) per step.
    for i in range(n - 1):
        j = np.arange(i + 1, n)
        prob = np.where(blocks[j] == blocks[i], p_in, p_out)
        hit = j[rng.random(len(j)) < prob]
        src.append(np.full(len(hit), i))
        dst.append(hit)
    src = np.concatenate(src) if src else np.zeros(0, dtype=np.int64)
    dst = np.concatenate(dst) if dst else np.zeros(0, dtype=np.int64)
    return WeightedGraph.from_edges(src, dst, nodes=range(n)), blocks
