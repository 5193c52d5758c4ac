"""
From partition to experiment: CID perturbation, hashing clusters into
buckets, arm assignment and the within-group share ratio (WGSR).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .clustering.partition import Partition
from .graph import GraphFormatError, WeightedGraph

# Perturbed nodes become singleton clusters with id = node id + this offset.
SINGLETON_OFFSET = 1 << 48

TREATMENT = 1
CONTROL = 0
HOLDOUT = -1
ARM_NAMES = {TREATMENT: "treatment", CONTROL: "control", HOLDOUT: "holdout"}

# splitmix64 finaliser constants (Steele, Lea & Flood 2014).
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def mix64(x) -> np.ndarray:
    """splitmix64 avalanche of ``x`` (array of integers), uint64 result."""
    z = np.asarray(x).astype(np.uint64, copy=True)
    with np.errstate(over="ignore"):
        z = z + _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        z = z ^ (z >> np.uint64(31))
    return z


def bucket_hash(ids, salt: int) -> np.ndarray:
    """``H(id, salt) = mix64(id XOR mix64(salt))``, stable across platforms."""
    key = mix64(np.uint64(salt & 0xFFFFFFFFFFFFFFFF))
    ids = np.asarray(ids, dtype=np.int64).astype(np.uint64)
    return mix64(ids ^ key)


def perturb_cids(g: WeightedGraph, p: Partition, r: float, seed: int = 0) -> Partition:
    """Reset ``floor(r * n)`` uniformly chosen nodes to singleton clusters.

    The chosen nodes get cluster id ``node_id + 2**48`` so they never collide
    with the clustering's own ids.
    """
    if not 0.0 <= r <= 1.0:
        raise ValueError(f"r must be in [0, 1], got {r}")
    n = len(p.labels)
    count = int(np.floor(r * n + 1e-12))
    if count == 0:
        return p
    rng = np.random.default_rng(seed)
    chosen = rng.choice(n, size=count, replace=False)
    labels = np.array(p.labels)
    labels[chosen] = g.node_ids[chosen] + SINGLETON_OFFSET
    return Partition.from_labels(g, labels)


@dataclass(frozen=True)
class Assignment:
    """Randomisation of a partition: cluster -> bucket -> arm.

    ``node_bucket`` and ``node_arm`` are indexed by internal node index;
    ``unit`` holds each node's randomisation id (its cluster id).
    """

    num_buckets: int
    salt: int
    treat_buckets: tuple
    ctrl_buckets: tuple
    unit: np.ndarray
    node_bucket: np.ndarray
    node_arm: np.ndarray

    def bucket_arm(self, b: int) -> int:
        if b in self.treat_buckets:
            return TREATMENT
        if b in self.ctrl_buckets:
            return CONTROL
        return HOLDOUT

    def arm_mask(self, arm: int) -> np.ndarray:
        return self.node_arm == arm

    def to_dict(self, partition_file: str | None = None) -> dict:
        out = {
            "B": self.num_buckets,
            "salt": self.salt,
            "treatment_buckets": list(self.treat_buckets),
            "control_buckets": list(self.ctrl_buckets),
            "hash": "splitmix64(cluster_id ^ splitmix64(salt)) mod B",
        }
        if partition_file is not None:
            out["partition_file"] = partition_file
        return out

    def write_json(self, path, partition_file: str | None = None) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(partition_file), fh, indent=2, sort_keys=True)
            fh.write("\n")


def assign(p: Partition, num_buckets: int = 10, treat_buckets=(0,), ctrl_buckets=(1,), salt: int = 0) -> Assignment:
    """Hash every cluster id into ``[0, num_buckets)``; nodes inherit their cluster's bucket."""
    if num_buckets < 1:
        raise ValueError("num_buckets must be >= 1")
    treat = tuple(sorted(int(b) for b in treat_buckets))
    ctrl = tuple(sorted(int(b) for b in ctrl_buckets))
    if set(treat) & set(ctrl):
        raise ValueError(f"treatment and control buckets overlap: {sorted(set(treat) & set(ctrl))}")
    for b in treat + ctrl:
        if not 0 <= b < num_buckets:
            raise ValueError(f"bucket {b} outside [0, {num_buckets})")
    unit = np.asarray(p.labels, dtype=np.int64)
    bucket = (bucket_hash(unit, salt) % np.uint64(num_buckets)).astype(np.int64)
    arm = np.full(len(unit), HOLDOUT, dtype=np.int8)
    arm[np.isin(bucket, treat)] = TREATMENT
    arm[np.isin(bucket, ctrl)] = CONTROL
    return Assignment(num_buckets, int(salt), treat, ctrl, unit, bucket, arm)


@dataclass(frozen=True)
class ShareEventLog:
    """Directed share events ``src -> dst`` as internal node indices, with counts."""

    src: np.ndarray
    dst: np.ndarray
    count: np.ndarray = field(default=None)
    source: str = "graph"

    def __post_init__(self):
        src = np.asarray(self.src, dtype=np.int64)
        dst = np.asarray(self.dst, dtype=np.int64)
        cnt = np.ones(len(src)) if self.count is None else np.asarray(self.count, dtype=float)
        if not (len(src) == len(dst) == len(cnt)):
            raise ValueError("src, dst and count must have equal length")
        if np.any(src == dst):
            raise ValueError("share events must have distinct endpoints")
        object.__setattr__(self, "src", src)
        object.__setattr__(self, "dst", dst)
        object.__setattr__(self, "count", cnt)

    def __len__(self) -> int:
        return len(self.src)

    @property
    def total(self) -> float:
        return float(self.count.sum())


def graph_events(g: WeightedGraph) -> ShareEventLog:
    """Both directions of every edge as one event each."""
    u, v, _ = g.edges()
    return ShareEventLog(np.concatenate([u, v]), np.concatenate([v, u]), source="graph")


def load_event_log(g: WeightedGraph, path) -> ShareEventLog:
    """Read ``src dst [count]`` lines (external ids) against ``g``'s node universe."""
    src, dst, cnt = [], [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            f = line.split()
            if len(f) not in (2, 3):
                raise GraphFormatError("expected 'src dst [count]'", path, lineno)
            try:
                u, v = int(f[0]), int(f[1])
                c = float(f[2]) if len(f) == 3 else 1.0
            except ValueError:
                raise GraphFormatError("non-numeric field", path, lineno) from None
            if u == v:
                raise GraphFormatError(f"self-share on node {u}", path, lineno)
            if c < 0:
                raise GraphFormatError(f"negative count {c}", path, lineno)
            try:
                src.append(g.index_of(u))
                dst.append(g.index_of(v))
            except KeyError as exc:
                raise GraphFormatError(f"unknown node {exc.args[0]}", path, lineno) from None
            cnt.append(c)
    return ShareEventLog(np.asarray(src, dtype=np.int64), np.asarray(dst, dtype=np.int64), np.asarray(cnt), source=str(path))


def wgsr(events: ShareEventLog, a: Assignment, arm: int = TREATMENT, other_arm: int = CONTROL) -> float:
    """Within-group share ratio of ``arm`` against ``other_arm``.

    Among events leaving ``arm`` and landing in either arm, the share that
    stays inside ``arm``. Returns ``nan`` when no such event exists.
    """
    if arm == other_arm:
        raise ValueError("arm and other_arm must differ")
    sa = a.node_arm[events.src]
    da = a.node_arm[events.dst]
    out = sa == arm
    num = events.count[out & (da == arm)].sum()
    den = events.count[out & ((da == arm) | (da == other_arm))].sum()
    if den == 0:
        return float("nan")
    return float(num / den)


def experiment_wgsr(events: ShareEventLog, a: Assignment) -> float:
    """Mean of the treatment and control WGSRs.

    The naive ATE contrasts exposure in both arms, so the two-sided average
    tracks it more closely than either arm's ratio when the arms end up with
    unequal sizes.
    """
    wt = wgsr(events, a, TREATMENT, CONTROL)
    wc = wgsr(events, a, CONTROL, TREATMENT)
    return float(0.5 * (wt + wc))
