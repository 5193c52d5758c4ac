"""Node-to-cluster assignments and the tab-separated partition file."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..graph import GraphFormatError, WeightedGraph


@dataclass(frozen=True, eq=False)
class Partition:
    """Cluster label per internal node index.

    ``sizes`` and ``degree_totals`` are keyed by cluster id; sizes count
    original graph nodes and degree totals are the ``Sigma_tot`` of each
    cluster (sum of member weighted degrees).
    """

    labels: np.ndarray
    sizes: dict
    degree_totals: dict

    @classmethod
    def from_labels(cls, g: WeightedGraph, labels) -> "Partition":
        labels = np.asarray(labels, dtype=np.int64).copy()
        if labels.shape != (g.n,):
            raise ValueError(f"expected {g.n} labels, got shape {labels.shape}")
        labels.setflags(write=False)
        ids, inverse, counts = np.unique(labels, return_inverse=True, return_counts=True)
        tot = np.bincount(inverse, weights=g.degrees, minlength=len(ids))
        sizes = {int(c): int(s) for c, s in zip(ids, counts)}
        degree_totals = {int(c): float(t) for c, t in zip(ids, tot)}
        return cls(labels, sizes, degree_totals)

    @classmethod
    def singletons(cls, g: WeightedGraph) -> "Partition":
        return cls.from_labels(g, np.arange(g.n))

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def num_clusters(self) -> int:
        return len(self.sizes)

    @property
    def max_cluster_size(self) -> int:
        return max(self.sizes.values(), default=0)

    def size_array(self) -> np.ndarray:
        return np.fromiter(self.sizes.values(), dtype=np.int64, count=len(self.sizes))

    def members(self, cluster: int) -> np.ndarray:
        return np.flatnonzero(self.labels == cluster)

    def relabeled(self) -> "Partition":
        """Dense ids ``0..k-1`` by descending size, ties by smallest member index."""
        return Partition._from_dense(self.labels, canonical_labels(self.labels), self)

    @staticmethod
    def _from_dense(old_labels, new_labels, old):
        mapping = {}
        for o, nl in zip(old_labels.tolist(), new_labels.tolist()):
            mapping.setdefault(o, nl)
        new_labels = np.asarray(new_labels, dtype=np.int64)
        new_labels.setflags(write=False)
        sizes = {mapping[c]: s for c, s in old.sizes.items()}
        degree_totals = {mapping[c]: t for c, t in old.degree_totals.items()}
        return Partition(new_labels, dict(sorted(sizes.items())), dict(sorted(degree_totals.items())))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Partition):
            return NotImplemented
        return np.array_equal(self.labels, other.labels)

    def same_clustering(self, other: "Partition") -> bool:
        """True when both group nodes identically, whatever the ids."""
        return np.array_equal(canonical_labels(self.labels), canonical_labels(other.labels))


def canonical_labels(labels) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.size == 0:
        return np.zeros(0, dtype=np.int64)
    ids, first, inverse, counts = np.unique(labels, return_index=True, return_inverse=True, return_counts=True)
    order = np.lexsort((first, -counts))
    rank = np.empty(len(ids), dtype=np.int64)
    rank[order] = np.arange(len(ids))
    return rank[inverse]


def write_partition(g: WeightedGraph, p: Partition, path, header: dict | None = None) -> None:
    """Write ``node_id<TAB>cluster_id`` lines sorted by node id.

    ``header`` entries become ``# key=value`` comment lines at the top.
    """
    with open(path, "w", encoding="utf-8") as fh:
        for key, value in (header or {}).items():
            fh.write(f"# {key}={value}\n")
        # node_ids are sorted, so internal order is node-id order.
        for nid, c in zip(g.node_ids.tolist(), p.labels.tolist()):
            fh.write(f"{nid}\t{c}\n")


def read_partition(g: WeightedGraph, path) -> Partition:
    labels = np.full(g.n, -1, dtype=np.int64)
    seen = np.zeros(g.n, dtype=bool)
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            fields = line.split()
            if len(fields) != 2:
                raise GraphFormatError("expected 'node_id<TAB>cluster_id'", path, lineno)
            try:
                nid, cid = int(fields[0]), int(fields[1])
            except ValueError:
                raise GraphFormatError("non-integer field", path, lineno) from None
            try:
                i = g.index_of(nid)
            except KeyError:
                raise GraphFormatError(f"node {nid} not in graph", path, lineno) from None
            if seen[i]:
                raise GraphFormatError(f"node {nid} assigned twice", path, lineno)
            seen[i] = True
            labels[i] = cid
    if not seen.all():
        missing = g.node_ids[~seen][:5].tolist()
        raise GraphFormatError(f"partition misses nodes, e.g. {missing}", path)
    return Partition.from_labels(g, labels)
