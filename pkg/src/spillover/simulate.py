"""
Spillover simulation on small-world networks.

For each network the graph is clustered once with Louvain; every cell of
the sweep then perturbs a fraction ``r`` of cluster ids, hashes clusters
into buckets, draws outcomes from the linear spillover model and records
the achieved WGSR and the naive difference-in-means ATE.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from .clustering.louvain import LouvainConfig, balanced_louvain
from .experiment import CONTROL, TREATMENT, assign, experiment_wgsr, graph_events, perturb_cids, wgsr
from .graph import WeightedGraph, watts_strogatz


@dataclass(frozen=True)
class OutcomeModelConfig:
    """``Y_i = tau*T_i + delta * sum_{j in N(i)} T_j S_j + eps_i``, ``S_j ~ Bernoulli(s_prob)``."""

    tau: float = 1.0
    delta: float = 0.2
    s_prob: float = 0.3
    noise_sd: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.s_prob <= 1.0:
            raise ValueError(f"s_prob must be in [0, 1], got {self.s_prob}")
        if self.noise_sd < 0:
            raise ValueError(f"noise_sd must be >= 0, got {self.noise_sd}")


@dataclass(frozen=True)
class NetworkSpec:
    label: str
    n: int
    k: int
    p: float = 0.1


PAPER_NETWORKS = (
    NetworkSpec("low", 10_000, 4, 0.1),
    NetworkSpec("medium", 10_000, 10, 0.1),
    NetworkSpec("high", 10_000, 20, 0.1),
)
PAPER_R_GRID = tuple(np.linspace(0.0, 1.0, 10).tolist())
PAPER_REPS = 30


def outcomes(g: WeightedGraph, treated: np.ndarray, cfg: OutcomeModelConfig, rng=None,
             spill_flags: np.ndarray | None = None) -> np.ndarray:
    """Per-node outcomes under the linear spillover model.

    ``treated`` is a boolean mask over internal node indices. ``S_j`` is
    drawn for every node but only matters for treated ``j``; edge weights
    are ignored (neighbourhood membership only).
    """
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    treated = np.asarray(treated, dtype=bool)
    if spill_flags is None:
        spill_flags = rng.random(g.n) < cfg.s_prob
    pattern = g.adjacency.copy()
    pattern.data[:] = 1.0
    exposure = pattern @ (treated & spill_flags).astype(float)
    y = cfg.tau * treated + cfg.delta * exposure
    if cfg.noise_sd > 0:
        y = y + rng.normal(0.0, cfg.noise_sd, g.n)
    return y


def true_ate(g: WeightedGraph, cfg: OutcomeModelConfig) -> float:
    """Everyone-treated minus everyone-control: ``tau + delta * mean_degree * s_prob``."""
    mean_degree = 2.0 * g.num_edges / g.n
    return cfg.tau + cfg.delta * mean_degree * cfg.s_prob


def true_ate_monte_carlo(g: WeightedGraph, cfg: OutcomeModelConfig, draws: int = 20, seed: int = 0) -> float:
    """Simulate both global counterfactuals and difference their means."""
    rng = np.random.default_rng(seed)
    diffs = []
    all_t = np.ones(g.n, dtype=bool)
    for _ in range(draws):
        y1 = outcomes(g, all_t, cfg, rng)
        y0 = outcomes(g, ~all_t, cfg, rng)
        diffs.append(y1.mean() - y0.mean())
    return float(np.mean(diffs))


@dataclass
class NetworkFit:
    network: str
    mean_degree: float
    slope: float
    intercept: float
    r2: float
    slope_se: float
    extrapolated_ate: float
    true_ate: float
    bias_reduction: float
    invalid_cells: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SweepResult:
    records: list = field(default_factory=list)
    fits: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def cells(self, network: str) -> list:
        return [r for r in self.records if r["network"] == network and r["valid"]]

    def level_summary(self, network: str) -> list:
        """Replication means per perturbation level, with t-based 95% CIs."""
        out = []
        rows = self.cells(network)
        for r in sorted({row["r"] for row in rows}):
            sel = [row for row in rows if row["r"] == r]
            ate = np.array([row["ate_obs"] for row in sel])
            w = np.array([row["wgsr"] for row in sel])
            bias = np.array([row["bias"] for row in sel])
            mean = float(ate.mean())
            if len(ate) > 1:
                half = float(stats.t.ppf(0.975, len(ate) - 1) * ate.std(ddof=1) / np.sqrt(len(ate)))
            else:
                half = float("nan")
            out.append({
                "network": network,
                "r": r,
                "reps": len(sel),
                "wgsr": float(w.mean()),
                "ate_obs": mean,
                "ci_low": mean - half,
                "ci_high": mean + half,
                "bias": float(bias.mean()),
            })
        return out

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["network", "mean_degree", "r", "rep", "wgsr", "ate_obs", "bias"])
            for row in self.records:
                if not row["valid"]:
                    continue
                w.writerow([
                    row["network"], f"{row['mean_degree']:.9f}", f"{row['r']:.9f}", row["rep"],
                    f"{row['wgsr']:.9f}", f"{row['ate_obs']:.9f}", f"{row['bias']:.9f}",
                ])

    def write_fit_json(self, path) -> None:
        payload = {
            "config": self.config,
            "networks": {
                name: {k: (round(v, 9) if isinstance(v, float) else v) for k, v in fit.to_dict().items()}
                for name, fit in self.fits.items()
            },
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")


def bias_reduction(sweep: SweepResult, network: str) -> float:
    """``1 - |bias at highest-WGSR level| / |bias at lowest-WGSR level|`` on replication means."""
    levels = sweep.level_summary(network)
    if not levels:
        raise ValueError(f"no valid cells for network {network!r}")
    hi = max(levels, key=lambda row: row["wgsr"])
    lo = min(levels, key=lambda row: row["wgsr"])
    if lo["bias"] == 0:
        return 0.0
    return 1.0 - abs(hi["bias"]) / abs(lo["bias"])


def _fit(sweep: SweepResult, spec: NetworkSpec, mean_degree: float, ate_true: float, invalid: int) -> NetworkFit:
    rows = sweep.cells(spec.label)
    x = np.array([r["wgsr"] for r in rows])
    y = np.array([r["ate_obs"] for r in rows])
    if len(rows) < 3 or np.ptp(x) == 0:
        nan = float("nan")
        return NetworkFit(spec.label, mean_degree, nan, nan, nan, nan, nan, ate_true, nan, invalid)
    res = stats.linregress(x, y)
    return NetworkFit(
        network=spec.label,
        mean_degree=mean_degree,
        slope=float(res.slope),
        intercept=float(res.intercept),
        r2=float(res.rvalue**2),
        slope_se=float(res.stderr),
        extrapolated_ate=float(res.slope + res.intercept),
        true_ate=ate_true,
        bias_reduction=bias_reduction(sweep, spec.label),
        invalid_cells=invalid,
    )


def run_sweep(networks=PAPER_NETWORKS, r_grid=PAPER_R_GRID, reps: int = PAPER_REPS,
              cfg: OutcomeModelConfig | None = None, seed: int = 0, num_buckets: int = 10,
              treat_buckets=(0, 1, 2, 3, 4), ctrl_buckets=(5, 6, 7, 8, 9),
              louvain_gamma: float = 1.0) -> SweepResult:
    """Run the WGSR sweep: networks x perturbation levels x replications.

    Replication ``rep`` uses hash salt ``seed ^ rep`` at every level, so a
    replication differs across levels only through the perturbation. The
    recorded ``wgsr`` is the two-arm average (:func:`experiment_wgsr`); the
    per-arm ratios are kept as ``wgsr_treatment`` / ``wgsr_control``. The
    default arms split all ten buckets between treatment and control. Cells
    with an empty arm are kept in ``records`` with ``valid=False`` and left
    out of the fits.
    """
    if reps < 2:
        raise ValueError("at least 2 replications required for CI")
    cfg = cfg or OutcomeModelConfig()
    networks = [NetworkSpec(*n) if not isinstance(n, NetworkSpec) else n for n in networks]
    result = SweepResult(config={
        "networks": [asdict(n) for n in networks],
        "r_grid": [float(r) for r in r_grid],
        "reps": reps,
        "seed": seed,
        "outcome_model": asdict(cfg),
        "num_buckets": num_buckets,
        "treatment_buckets": list(treat_buckets),
        "control_buckets": list(ctrl_buckets),
        "louvain_gamma": louvain_gamma,
    })
    for net_idx, spec in enumerate(networks):
        g = watts_strogatz(spec.n, spec.k, spec.p, seed=seed + net_idx)
        base = balanced_louvain(g, LouvainConfig(gamma=louvain_gamma, seed=seed))
        events = graph_events(g)
        mean_degree = 2.0 * g.num_edges / g.n
        ate_true = true_ate(g, cfg)
        invalid = 0
        for r_idx, r in enumerate(r_grid):
            for rep in range(reps):
                cell_seed = int(np.random.SeedSequence([seed, net_idx, r_idx, rep]).generate_state(1)[0])
                part = perturb_cids(g, base, float(r), seed=cell_seed)
                a = assign(part, num_buckets, treat_buckets, ctrl_buckets, salt=seed ^ rep)
                t_mask = a.node_arm == TREATMENT
                c_mask = a.node_arm == CONTROL
                row = {"network": spec.label, "mean_degree": mean_degree, "r": float(r), "rep": rep}
                if not t_mask.any() or not c_mask.any():
                    invalid += 1
                    row.update(wgsr=float("nan"), ate_obs=float("nan"), bias=float("nan"), valid=False)
                    result.records.append(row)
                    continue
                rng = np.random.default_rng([seed, net_idx, r_idx, rep, 1])
                y = outcomes(g, t_mask, cfg, rng)
                ate = float(y[t_mask].mean() - y[c_mask].mean())
                row.update(
                    wgsr=experiment_wgsr(events, a),
                    wgsr_treatment=wgsr(events, a, TREATMENT, CONTROL),
                    wgsr_control=wgsr(events, a, CONTROL, TREATMENT),
                    ate_obs=ate,
                    bias=ate - ate_true,
                    valid=True,
                )
                result.records.append(row)
        result.fits[spec.label] = _fit(result, spec, mean_degree, ate_true, invalid)
    return result
