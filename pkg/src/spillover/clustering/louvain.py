"""
Balanced Louvain: Louvain local moving with a piecewise size penalty, plus a
connectivity-based split of clusters that end up above ``n_max``.

Standard Louvain is the ``alpha=0, n_max<0`` special case and runs through
exactly the same code.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ..graph import WeightedGraph
from .partition import Partition

# Safety cap on sweeps within one level; the penalised score has no global
# potential, so local moving is not guaranteed to settle on its own.
_MAX_SWEEPS = 200


@dataclass(frozen=True)
class LouvainConfig:
    """Balanced Louvain parameters.

    ``n_max`` is the hard cluster-size cap; a negative value keeps the soft
    penalty threshold ``tau = |n_max| // 2`` but disables the split.
    """

    alpha: float = 0.0
    n_max: int = -1
    gamma: float = 1.0
    seed: int = 0
    max_passes: int = 50
    min_gain: float = 1e-9

    def __post_init__(self):
        if not self.alpha >= 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if not self.gamma > 0:
            raise ValueError(f"gamma must be > 0, got {self.gamma}")
        if self.n_max == 0:
            raise ValueError("n_max must be nonzero (negative disables the hard split)")
        if self.max_passes < 1:
            raise ValueError("max_passes must be >= 1")
        if self.min_gain < 0:
            raise ValueError("min_gain must be >= 0")

    @property
    def tau(self) -> int:
        return max(abs(int(self.n_max)) // 2, 1)

    @property
    def split_enabled(self) -> bool:
        return self.n_max > 0


def modularity_gain(k_i_in: float, k_i: float, sigma_tot: float, m: float, gamma: float = 1.0) -> float:
    """Unnormalised gain ``k_i_in - gamma * k_i * sigma_tot / (2m)`` of joining a cluster.

    ``sigma_tot`` must exclude node ``i`` itself. The result is ``m`` times
    the change in modularity, so it is comparable across candidates only.
    """
    if m <= 0:
        return 0.0 if k_i_in == 0 else float(k_i_in)
    return k_i_in - gamma * k_i * sigma_tot / (2.0 * m)


def size_penalty(cluster_size: float, tau: float, k_bar: float) -> float:
    """Zero up to ``tau`` members, then ``k_bar * (size - tau) / tau``."""
    if cluster_size <= tau:
        return 0.0
    return k_bar * (cluster_size - tau) / tau


@dataclass
class LevelTrace:
    """State at the end of one aggregation level."""

    level: int
    num_clusters: int
    moves: int
    labels: np.ndarray  # on original nodes
    modularity: float  # tracked incrementally from the move gains


@dataclass
class LouvainResult:
    partition: Partition
    levels: list = field(default_factory=list)
    split_rounds: int = 0


class _Level:
    """Contracted graph used during local moving (diagonal = self-loops)."""

    def __init__(self, adj: sp.csr_matrix, sizes: np.ndarray):
        adj = adj.tocsr()
        self.n = adj.shape[0]
        self.self_w = adj.diagonal()
        self.k = np.asarray(adj.sum(axis=1)).ravel()
        self.sizes = sizes
        off = (adj - sp.diags(self.self_w)).tocsr()
        off.eliminate_zeros()
        off.sort_indices()
        self.adj = adj
        self.off = off


def _local_moving(lv: _Level, m: float, cfg: LouvainConfig, k_bar: float, rng):
    n = lv.n
    indptr = lv.off.indptr.tolist()
    indices = lv.off.indices.tolist()
    data = lv.off.data.tolist()
    k = lv.k.tolist()
    s = lv.sizes.tolist()
    comm = list(range(n))
    tot = list(k)
    size = list(s)

    gamma_2m = cfg.gamma / (2.0 * m)
    alpha = cfg.alpha
    tau = float(cfg.tau)
    penalise = alpha > 0
    min_gain = cfg.min_gain

    moves = 0
    q_delta = 0.0  # accepted unnormalised gains; divide by m for modularity
    for _ in range(_MAX_SWEEPS):
        sweep_moves = 0
        sweep_gain = 0.0
        for i in rng.permutation(n).tolist():
            ci = comm[i]
            ki = k[i]
            si = s[i]
            tot[ci] -= ki
            size[ci] -= si

            links = {}
            for p in range(indptr[i], indptr[i + 1]):
                c = comm[indices[p]]
                links[c] = links.get(c, 0.0) + data[p]

            g_k = gamma_2m * ki
            own_dq = links.get(ci, 0.0) - g_k * tot[ci]
            own_s = own_dq
            if penalise and size[ci] > tau:
                own_s -= alpha * k_bar * (size[ci] - tau) / tau
            best, best_s, best_dq, best_size = ci, own_s, own_dq, size[ci]
            for c, kin in links.items():
                if c == ci:
                    continue
                dq = kin - g_k * tot[c]
                sc = dq
                sz = size[c]
                if penalise and sz > tau:
                    sc -= alpha * k_bar * (sz - tau) / tau
                if sc > best_s or (sc == best_s and (sz < best_size or (sz == best_size and c < best))):
                    best, best_s, best_dq, best_size = c, sc, dq, sz

            if best != ci and best_s > 0 and best_s - own_s > min_gain:
                comm[i] = best
                tot[best] += ki
                size[best] += si
                sweep_moves += 1
                sweep_gain += best_s - own_s
                q_delta += best_dq - own_dq
            else:
                tot[ci] += ki
                size[ci] += si
        moves += sweep_moves
        if sweep_moves == 0 or sweep_gain < min_gain:
            break
    return np.asarray(comm, dtype=np.int64), moves, q_delta


def _contract(lv: _Level, comm: np.ndarray) -> tuple[_Level, np.ndarray]:
    ids, dense = np.unique(comm, return_inverse=True)
    c = len(ids)
    proj = sp.csr_matrix((np.ones(lv.n), (np.arange(lv.n), dense)), shape=(lv.n, c))
    # Internal edges land on the diagonal twice (i->j and j->i), existing
    # self-loops once, which keeps modularity unchanged under contraction.
    new_adj = (proj.T @ lv.adj @ proj).tocsr()
    new_sizes = np.bincount(dense, weights=lv.sizes, minlength=c)
    return _Level(new_adj, new_sizes), dense


def run_balanced_louvain(g: WeightedGraph, cfg: LouvainConfig | None = None) -> LouvainResult:
    """Balanced Louvain with per-level trace information.

    See :func:`balanced_louvain` for the returned partition's contract.
    """
    cfg = cfg or LouvainConfig()
    n = g.n
    if n == 0:
        return LouvainResult(Partition.from_labels(g, np.zeros(0, dtype=np.int64)))
    m = g.m
    if m == 0:
        part = Partition.from_labels(g, np.arange(n))
        if cfg.split_enabled:
            part = hard_split(g, part, cfg.n_max)
        return LouvainResult(part.relabeled())

    rng = np.random.default_rng(cfg.seed)
    k_bar = 2.0 * m / n
    lv = _Level(g.adjacency, np.ones(n))
    node_to_level = np.arange(n)
    q = -cfg.gamma * float(np.sum(g.degrees**2)) / (2.0 * m) ** 2
    levels = []
    for level in range(cfg.max_passes):
        comm, moves, q_delta = _local_moving(lv, m, cfg, k_bar, rng)
        q += q_delta / m
        lv, dense = _contract(lv, comm)
        node_to_level = dense[node_to_level]
        levels.append(LevelTrace(level, lv.n, moves, node_to_level.copy(), q))
        if moves == 0:
            break

    part = Partition.from_labels(g, node_to_level)
    rounds = 0
    if cfg.split_enabled:
        part, rounds = _hard_split(g, part, cfg.n_max)
    return LouvainResult(part.relabeled(), levels, rounds)


def balanced_louvain(g: WeightedGraph, cfg: LouvainConfig | None = None) -> Partition:
    """Cluster ``g`` maximising ``gain - alpha * penalty(|C|)`` per node move.

    Cluster sizes count original nodes at every aggregation level. When
    ``cfg.n_max > 0`` oversized clusters are split afterwards (see
    :func:`hard_split`). Output ids are dense, ordered by descending size;
    the result is a pure function of ``(g, cfg)``.
    """
    return run_balanced_louvain(g, cfg).partition


def louvain(g: WeightedGraph, gamma: float = 1.0, seed: int = 0, max_passes: int = 50,
            min_gain: float = 1e-9) -> Partition:
    """Plain Louvain, i.e. balanced Louvain without penalty or split."""
    cfg = LouvainConfig(alpha=0.0, n_max=-1, gamma=gamma, seed=seed, max_passes=max_passes, min_gain=min_gain)
    return balanced_louvain(g, cfg)


def internal_connectivity(g: WeightedGraph, members: np.ndarray) -> np.ndarray:
    """``conn_i``: total weight from each member to the other members."""
    sub = g.adjacency[members][:, members]
    return np.asarray(sub.sum(axis=1)).ravel()


def _hard_split(g: WeightedGraph, p: Partition, n_max: int) -> tuple[Partition, int]:
    if n_max < 1:
        raise ValueError(f"n_max must be >= 1, got {n_max}")
    labels = np.array(p.labels, dtype=np.int64)
    next_id = int(labels.max()) + 1 if len(labels) else 0
    pending = sorted(c for c, sz in p.sizes.items() if sz > n_max)
    rounds = 0
    while pending:
        rounds += 1
        queue, pending = pending, []
        for c in queue:
            members = np.flatnonzero(labels == c)
            excess = len(members) - n_max
            if excess <= 0:
                continue
            conn = internal_connectivity(g, members)
            order = np.lexsort((g.node_ids[members], conn))
            labels[members[order[:excess]]] = next_id
            if excess > n_max:
                pending.append(next_id)
            next_id += 1
    return Partition.from_labels(g, labels), rounds


def hard_split(g: WeightedGraph, p: Partition, n_max: int) -> Partition:
    """Split every cluster larger than ``n_max``.

    Members are ranked by internal connectivity (ties: smaller node id
    first) and the weakest are moved to a fresh cluster until the original
    fits; fresh clusters that are still too large are split in a later
    round. Connectivity is computed once per cluster per round.
    """
    return _hard_split(g, p, n_max)[0]
