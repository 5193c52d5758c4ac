"""Partition quality: modularity, intra-cluster edge ratio, size balance and the composite score."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..graph import WeightedGraph
from .partition import Partition

SCORE_WEIGHTS = {"modularity": 0.2, "intra_edge_ratio": 0.3, "balance": 0.3, "ctrl": 0.2}


def _check(g: WeightedGraph, p: Partition):
    if len(p.labels) != g.n:
        raise ValueError(f"partition covers {len(p.labels)} nodes, graph has {g.n}")
    if g.m <= 0:
        raise ValueError("modularity undefined for a graph without edges (m = 0)")


def _intra_weight(g: WeightedGraph, labels: np.ndarray) -> np.ndarray:
    """Per-node weight to neighbours sharing its cluster (both directions)."""
    rows = np.repeat(np.arange(g.n), np.diff(g.indptr))
    same = labels[rows] == labels[g.indices]
    return np.bincount(rows[same], weights=g.weights[same], minlength=g.n)


def modularity(g: WeightedGraph, p: Partition, gamma: float = 1.0) -> float:
    """Modularity with resolution ``gamma``, computed cluster by cluster.

    ``Q = sum_C [ L_C / m - gamma * (Sigma_tot_C / 2m)^2 ]`` where ``L_C``
    is the internal edge weight of cluster ``C``.
    """
    _check(g, p)
    m2 = 2.0 * g.m
    internal2 = _intra_weight(g, p.labels).sum()  # sum of L_C, counted twice
    _, inverse = np.unique(p.labels, return_inverse=True)
    tot = np.bincount(inverse, weights=g.degrees)
    return float(internal2 / m2 - gamma * np.sum((tot / m2) ** 2))


def intra_edge_ratio(g: WeightedGraph, p: Partition) -> float:
    """Share of total edge weight whose endpoints sit in the same cluster."""
    _check(g, p)
    return float(_intra_weight(g, p.labels).sum() / (2.0 * g.m))


@dataclass(frozen=True)
class QualityReport:
    modularity: float
    intra_edge_ratio: float
    size_variance: float
    max_cluster: int
    num_clusters: int
    threshold: int | None
    ctrl: bool
    composite_score: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def quality(g: WeightedGraph, p: Partition, gamma: float = 1.0, threshold: int | None = None,
            sigma_max: float | None = None) -> QualityReport:
    """Quality summary of ``p``.

    ``ctrl`` is true when the largest cluster is within ``threshold`` (false
    when no threshold is given). Passing ``sigma_max`` (a size *variance*)
    also fills in :func:`composite_score`.
    """
    q = modularity(g, p, gamma)
    rho = intra_edge_ratio(g, p)
    sizes = p.size_array().astype(float)
    var = float(np.var(sizes))
    max_c = int(sizes.max())
    ctrl = threshold is not None and max_c <= threshold
    score = None
    if sigma_max is not None:
        score = composite_score(q, rho, var, sigma_max, ctrl)
    return QualityReport(q, rho, var, max_c, len(sizes), threshold, ctrl, score)


def composite_score(q: float, rho: float, variance: float, sigma_max: float, ctrl: bool) -> float:
    """``0.2 Q + 0.3 rho + 0.3 Bal + 0.2 Ctrl`` with ``Bal = 1 - variance / sigma_max``.

    Both ``variance`` and ``sigma_max`` are size variances; ``sigma_max`` is
    normally the largest variance among the methods being compared. ``Bal``
    is clamped to ``[0, 1]``.
    """
    if not sigma_max > 0:
        raise ValueError(f"sigma_max must be positive, got {sigma_max}")
    bal = min(max(1.0 - variance / sigma_max, 0.0), 1.0)
    w = SCORE_WEIGHTS
    return w["modularity"] * q + w["intra_edge_ratio"] * rho + w["balance"] * bal + w["ctrl"] * float(bool(ctrl))
