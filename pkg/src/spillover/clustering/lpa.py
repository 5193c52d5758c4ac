"""Label propagation with a large-cluster constraint (baseline)."""

from __future__ import annotations

import numpy as np

from ..graph import WeightedGraph
from .partition import Partition


def _propagate(indptr, indices, data, labels, active, allowed_nbr, frozen, rng, max_iters, theta):
    """Asynchronous weighted-majority sweeps over ``active`` nodes.

    ``frozen`` is the current set of large labels; it is never adopted, and
    nodes holding one do not update. When ``theta`` is given the set is
    recomputed after each sweep.
    """
    n_iter = 0
    active = np.asarray(active)
    while n_iter < max_iters:
        n_iter += 1
        changed = 0
        for i in active[rng.permutation(len(active))].tolist():
            li = labels[i]
            if li in frozen:
                continue
            votes = {}
            for p in range(indptr[i], indptr[i + 1]):
                j = indices[p]
                if allowed_nbr is not None and not allowed_nbr[j]:
                    continue
                lj = labels[j]
                if lj in frozen:
                    continue
                votes[lj] = votes.get(lj, 0.0) + data[p]
            if not votes:
                continue
            top = max(votes.values())
            new = min(l for l, v in votes.items() if v == top)
            if new != li:
                labels[i] = new
                changed += 1
        if theta is not None:
            counts = {}
            for l in labels:
                counts[l] = counts.get(l, 0) + 1
            new_frozen = {l for l, c in counts.items() if c > theta}
            grew = new_frozen != frozen
            frozen.clear()
            frozen.update(new_frozen)
            if changed == 0 and not grew:
                break
        elif changed == 0:
            break
    return n_iter


def lpa_constrained(g: WeightedGraph, theta: int, seed: int = 0, max_iters: int = 100) -> Partition:
    """Two-phase label propagation that refuses labels held by more than ``theta`` nodes.

    Phase 1 propagates weighted-majority labels (ties to the smallest label)
    while excluding the current large-label set, which is refreshed after
    every sweep. Phase 2 resets the nodes still carrying a large label and
    re-propagates among those nodes only, again excluding the large labels.
    Each phase stops after a sweep without changes or ``max_iters`` sweeps.
    """
    if theta < 1:
        raise ValueError(f"theta must be >= 1, got {theta}")
    n = g.n
    if n == 0:
        return Partition.from_labels(g, np.zeros(0, dtype=np.int64))
    rng = np.random.default_rng(seed)
    indptr = g.indptr.tolist()
    indices = g.indices.tolist()
    data = g.weights.tolist()
    labels = list(range(n))

    large: set = set()
    _propagate(indptr, indices, data, labels, np.arange(n), None, large, rng, max_iters, theta)

    lab = np.asarray(labels, dtype=np.int64)
    in_large = np.isin(lab, np.fromiter(large, dtype=np.int64, count=len(large)))
    if in_large.any():
        v_large = np.flatnonzero(in_large)
        # Fresh ids above n so reset nodes cannot collide with surviving labels.
        for i in v_large.tolist():
            labels[i] = n + i
        _propagate(indptr, indices, data, labels, v_large, in_large, set(large), rng, max_iters, None)
    return Partition.from_labels(g, labels).relabeled()


def label_propagation(g: WeightedGraph, seed: int = 0, max_iters: int = 100) -> Partition:
    """Unconstrained LPA (the constrained variant with ``theta = n``)."""
    return lpa_constrained(g, max(g.n, 1), seed=seed, max_iters=max_iters)
