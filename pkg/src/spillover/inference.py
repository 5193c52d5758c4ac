"""
Bucket-level treatment-effect inference for ratio metrics.

Buckets are the randomisation and analysis unit. A ratio metric
``sum(Y) / sum(N)`` is linearised per bucket with the delta method, after
which the difference in means, CUPED and cross-fitted CUPAC all operate on
the pseudo-outcomes ``Z_b`` with Welch t-inference.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .experiment import bucket_hash


class InferenceError(ValueError):
    """Input that cannot support the requested inference (too few buckets, ...)."""


@dataclass(frozen=True, eq=False)
class BucketTable:
    """Per-bucket numerator ``y``, denominator ``n`` and covariates ``x``."""

    bucket_id: np.ndarray
    treated: np.ndarray
    y: np.ndarray
    n: np.ndarray
    x: np.ndarray
    covariate_names: tuple = ()

    def __post_init__(self):
        bid = np.asarray(self.bucket_id, dtype=np.int64)
        treated = np.asarray(self.treated, dtype=bool)
        y = np.asarray(self.y, dtype=float)
        n = np.asarray(self.n, dtype=float)
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(len(bid), -1) if x.size else np.zeros((len(bid), 0))
        rows = len(bid)
        if not (len(treated) == len(y) == len(n) == x.shape[0] == rows):
            raise ValueError("bucket columns must have equal length")
        if len(np.unique(bid)) != rows:
            raise ValueError("bucket ids must be unique")
        if np.any(n <= 0):
            raise ValueError("bucket sizes N_b must be positive")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(x))):
            raise ValueError("non-finite values in bucket table")
        names = tuple(self.covariate_names) or tuple(f"x{j + 1}" for j in range(x.shape[1]))
        if len(names) != x.shape[1]:
            raise ValueError("covariate_names does not match covariate arity")
        for attr, val in (("bucket_id", bid), ("treated", treated), ("y", y), ("n", n), ("x", x),
                          ("covariate_names", names)):
            object.__setattr__(self, attr, val)

    @property
    def num_buckets(self) -> int:
        return len(self.bucket_id)

    @property
    def num_covariates(self) -> int:
        return self.x.shape[1]

    def subset(self, mask) -> "BucketTable":
        mask = np.asarray(mask)
        return BucketTable(self.bucket_id[mask], self.treated[mask], self.y[mask], self.n[mask],
                           self.x[mask], self.covariate_names)

    def permuted(self, order) -> "BucketTable":
        return self.subset(np.asarray(order))

    @classmethod
    def from_csv(cls, path) -> "BucketTable":
        """Read ``bucket_id,arm,y,n,x1,...,xp`` with a header row."""
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            try:
                header = [h.strip() for h in next(reader)]
            except StopIteration:
                raise InferenceError(f"{path}: empty file") from None
            if [h.lower() for h in header[:4]] != ["bucket_id", "arm", "y", "n"]:
                raise InferenceError(f"{path}: header must start with bucket_id,arm,y,n")
            names = tuple(header[4:])
            ids, arms, ys, ns, xs = [], [], [], [], []
            for lineno, row in enumerate(reader, start=2):
                if not row or all(not c.strip() for c in row):
                    continue
                if len(row) != len(header):
                    raise InferenceError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
                arm = row[1].strip().lower()
                if arm not in ("treatment", "control"):
                    raise InferenceError(f"{path}:{lineno}: arm must be 'treatment' or 'control', got {row[1]!r}")
                try:
                    ids.append(int(row[0]))
                    ys.append(float(row[2]))
                    ns.append(float(row[3]))
                    xs.append([float(c) for c in row[4:]])
                except ValueError as exc:
                    raise InferenceError(f"{path}:{lineno}: {exc}") from None
                arms.append(arm == "treatment")
        x = np.asarray(xs, dtype=float).reshape(len(ids), len(names))
        try:
            return cls(np.asarray(ids), np.asarray(arms), np.asarray(ys), np.asarray(ns), x, names)
        except ValueError as exc:
            raise InferenceError(f"{path}: {exc}") from None

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["bucket_id", "arm", "y", "n", *self.covariate_names])
            for i in range(self.num_buckets):
                w.writerow([int(self.bucket_id[i]), "treatment" if self.treated[i] else "control",
                            repr(float(self.y[i])), repr(float(self.n[i])),
                            *(repr(float(v)) for v in self.x[i])])


@dataclass(frozen=True)
class PseudoOutcomes:
    z: np.ndarray
    mu_y: float
    mu_n: float


@dataclass
class AnalysisReport:
    """One estimator's result on one table."""

    estimator: str
    ate: float
    variance: float
    t: float
    df: float
    p_value: float
    ci95: tuple
    n_treatment: int
    n_control: int
    control_ratio: float
    var_red: float | None = None
    theta: float | None = None
    folds: int | None = None
    flags: list = field(default_factory=list)

    @property
    def se(self) -> float:
        return math.sqrt(self.variance)

    @property
    def relative_diff_pct(self) -> float:
        """ATE as a percentage of the control ratio."""
        return self.ate / self.control_ratio * 100.0

    def to_dict(self, precision: int = 9) -> dict:
        def r(v):
            if v is None:
                return None
            v = float(v)
            if not math.isfinite(v):
                return str(v)
            return round(v, precision)

        return {
            "estimator": self.estimator,
            "ate": r(self.ate),
            "variance": r(self.variance),
            "se": r(self.se),
            "t": r(self.t),
            "df": r(self.df),
            "p_value": r(self.p_value),
            "ci95": [r(self.ci95[0]), r(self.ci95[1])],
            "relative_diff_pct": r(self.relative_diff_pct),
            "ci95_relative_pct": [r(self.ci95[0] / self.control_ratio * 100.0),
                                  r(self.ci95[1] / self.control_ratio * 100.0)],
            "var_red": r(self.var_red),
            "theta": r(self.theta),
            "folds": self.folds,
            "n_treatment": self.n_treatment,
            "n_control": self.n_control,
            "flags": list(self.flags),
        }


# -- ratios and pseudo-outcomes ---------------------------------------------


def aggregate_ratios(t: BucketTable) -> tuple[float, float, float]:
    """``(R_treat, R_ctrl, R_treat - R_ctrl)`` with ``R = sum(Y) / sum(N)`` per arm."""
    out = []
    for arm in (True, False):
        sel = t.treated == arm
        total_n = t.n[sel].sum()
        if total_n == 0:
            raise InferenceError(f"{'treatment' if arm else 'control'} arm has zero total N")
        out.append(float(t.y[sel].sum() / total_n))
    return out[0], out[1], out[0] - out[1]


def delta_pseudo(t: BucketTable) -> PseudoOutcomes:
    """Delta-method pseudo-outcomes around the pooled means of ``Y`` and ``N``."""
    if t.num_buckets == 0:
        raise InferenceError("empty bucket table")
    mu_y = float(t.y.mean())
    mu_n = float(t.n.mean())
    if mu_n == 0:
        raise InferenceError("mean bucket size is zero")
    z = mu_y / mu_n + t.y / mu_n - (mu_y / mu_n**2) * t.n
    return PseudoOutcomes(z, mu_y, mu_n)


# -- Welch inference ----------------------------------------------------------


def _welch(values: np.ndarray, treated: np.ndarray, estimator: str, control_ratio: float) -> AnalysisReport:
    zt = values[treated]
    zc = values[~treated]
    nt, nc = len(zt), len(zc)
    if nt < 2 or nc < 2:
        raise InferenceError(f"need at least 2 buckets per arm, got {nt} treatment and {nc} control")
    ate = float(zt.mean() - zc.mean())
    vt = float(zt.var(ddof=1)) / nt
    vc = float(zc.var(ddof=1)) / nc
    var = vt + vc
    flags = []
    if var > 0:
        tstat = ate / math.sqrt(var)
        df = var**2 / (vt**2 / (nt - 1) + vc**2 / (nc - 1))
        p = float(2.0 * stats.t.sf(abs(tstat), df))
        half = float(stats.t.ppf(0.975, df)) * math.sqrt(var)
    else:
        flags.append("degenerate_variance")
        df = float(nt + nc - 2)
        if ate == 0:
            tstat, p = 0.0, 1.0
        else:
            tstat, p = math.copysign(math.inf, ate), 0.0
        half = 0.0
    return AnalysisReport(estimator, ate, var, tstat, df, p, (ate - half, ate + half), nt, nc, control_ratio,
                          flags=flags)


def dim_inference(t: BucketTable) -> AnalysisReport:
    """Difference in mean pseudo-outcomes with Welch-Satterthwaite degrees of freedom."""
    z = delta_pseudo(t).z
    _, r_ctrl, _ = aggregate_ratios(t)
    report = _welch(z, t.treated, "DIM", r_ctrl)
    report.var_red = 0.0 if report.variance > 0 else None
    return report


def var_red(report: AnalysisReport, dim_report: AnalysisReport) -> float:
    """``1 - Var(method) / Var(DIM)``."""
    if dim_report.variance <= 0:
        raise InferenceError("DIM variance is zero; variance reduction undefined")
    return 1.0 - report.variance / dim_report.variance


def _adjust(z: np.ndarray, control_variate: np.ndarray) -> tuple[np.ndarray, float]:
    """Pooled control-variate adjustment ``z - theta (c - mean c)``."""
    cc = control_variate - control_variate.mean()
    theta = float(np.dot(z - z.mean(), cc) / np.dot(cc, cc))
    return z - theta * cc, theta


def cuped(t: BucketTable, covariate: int | str = 0) -> AnalysisReport:
    """Single-covariate CUPED on the pseudo-outcomes, ``theta`` pooled over both arms."""
    j = covariate if isinstance(covariate, (int, np.integer)) else t.covariate_names.index(covariate)
    x = t.x[:, j]
    if np.var(x) == 0:
        raise InferenceError(f"covariate {t.covariate_names[j]!r} has zero variance")
    z = delta_pseudo(t).z
    _, r_ctrl, _ = aggregate_ratios(t)
    z_adj, theta = _adjust(z, x)
    report = _welch(z_adj, t.treated, "CUPED", r_ctrl)
    report.theta = theta
    report.var_red = var_red(report, _welch(z, t.treated, "DIM", r_ctrl))
    return report


# -- predictors ---------------------------------------------------------------


@dataclass(frozen=True)
class LinearPredictor:
    coef: np.ndarray
    intercept: float

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return x @ self.coef + self.intercept


def linear_predictor(x, z, ridge: float = 1e-8) -> LinearPredictor:
    """Least squares with intercept, via normal equations on centred data.

    ``ridge`` is added to the Gram diagonal so collinear or constant
    covariates still give finite coefficients (a constant column gets 0).
    """
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if len(z) < 2:
        raise InferenceError("linear predictor needs at least 2 training rows")
    if x.shape[0] != len(z):
        raise ValueError("x and z row counts differ")
    x_mean = x.mean(axis=0)
    z_mean = float(z.mean())
    xc = x - x_mean
    gram = xc.T @ xc
    gram[np.diag_indices_from(gram)] += ridge
    coef = np.linalg.solve(gram, xc.T @ (z - z_mean)) if x.shape[1] else np.zeros(0)
    return LinearPredictor(coef, z_mean - float(x_mean @ coef))


Model = Callable[[np.ndarray, np.ndarray], Callable[[np.ndarray], np.ndarray]]


def fold_of(bucket_id, k: int, seed: int = 0) -> np.ndarray:
    """Cross-fitting fold per bucket, keyed on the id so row order is irrelevant."""
    return (bucket_hash(bucket_id, seed) % np.uint64(k)).astype(np.int64)


def cupac_predictions(t: BucketTable, k: int = 5, model: Model = linear_predictor, seed: int = 0,
                      cross_fit: bool = True, covariates: Sequence[int] | None = None,
                      z: np.ndarray | None = None) -> np.ndarray:
    """Predicted pseudo-outcome per bucket, trained on control buckets only.

    With ``cross_fit`` a control bucket is predicted by the model that did
    not see its fold, and a treatment bucket by the mean of all ``k``
    models. Without it, a single model fit on all control buckets predicts
    everything (in-sample for control).
    """
    z = delta_pseudo(t).z if z is None else z
    x = t.x if covariates is None else t.x[:, list(covariates)]
    ctrl = ~t.treated
    pred = np.empty(t.num_buckets)
    if not cross_fit:
        f = model(x[ctrl], z[ctrl])
        return np.asarray(f(x), dtype=float)
    if k < 2:
        raise InferenceError("cross-fitting needs k >= 2")
    if ctrl.sum() < k:
        raise InferenceError(f"control arm has {int(ctrl.sum())} buckets, fewer than k={k}")
    folds = fold_of(t.bucket_id, k, seed)
    treat_sum = np.zeros(int(t.treated.sum()))
    for fold in range(k):
        train = ctrl & (folds != fold)
        if train.sum() < 2:
            raise InferenceError(f"fold {fold}: fewer than 2 training buckets")
        f = model(x[train], z[train])
        held = ctrl & (folds == fold)
        if held.any():
            pred[held] = f(x[held])
        treat_sum += f(x[t.treated])
    pred[t.treated] = treat_sum / k
    return pred


def cupac(t: BucketTable, k: int = 5, model: Model = linear_predictor, seed: int = 0,
          cross_fit: bool = True, covariates: Sequence[int] | None = None) -> AnalysisReport:
    """CUPAC on pseudo-outcomes with cross-fitted predictions.

    Falls back to the DIM result (flagged ``no_signal``) when predictions
    are constant.
    """
    if t.num_covariates == 0:
        raise InferenceError("CUPAC needs at least one covariate")
    pseudo = delta_pseudo(t)
    z = pseudo.z
    _, r_ctrl, _ = aggregate_ratios(t)
    dim = _welch(z, t.treated, "DIM", r_ctrl)
    pred = cupac_predictions(t, k, model, seed, cross_fit, covariates, z=z)
    spread = np.var(pred)
    scale = max(np.var(z), np.finfo(float).tiny)
    if not np.isfinite(spread) or spread <= 1e-14 * scale:
        report = _welch(z, t.treated, "CUPAC", r_ctrl)
        report.flags.append("no_signal")
        report.theta = 0.0
        report.var_red = 0.0
    else:
        z_adj, theta = _adjust(z, pred)
        report = _welch(z_adj, t.treated, "CUPAC", r_ctrl)
        report.theta = theta
        report.var_red = var_red(report, dim) if dim.variance > 0 else None
    report.folds = k if cross_fit else 1
    if not cross_fit:
        report.flags.append("in_sample")
    return report


def select_covariates(history: BucketTable, threshold: float = 0.3) -> list:
    """Indices of covariates with ``|corr(x_j, Z)| >= threshold`` on ``history``.

    A simple stand-in for model-based screening; constant covariates are
    never selected. Warns when nothing passes.
    """
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must be in [0, 1]")
    z = delta_pseudo(history).z
    keep = []
    for j in range(history.num_covariates):
        xj = history.x[:, j]
        if np.std(xj) == 0 or np.std(z) == 0:
            continue
        r = float(np.corrcoef(xj, z)[0, 1])
        if abs(r) >= threshold:
            keep.append(j)
    if not keep:
        warnings.warn(f"no covariate reaches |corr| >= {threshold}", stacklevel=2)
    return keep


ESTIMATORS = ("dim", "cuped", "cupac")


def analyze(t: BucketTable, estimators: Sequence[str] = ESTIMATORS, k: int = 5, seed: int = 0,
            cuped_covariate: int = 0, covariates: Sequence[int] | None = None) -> list:
    """Run the requested estimators; CUPED/CUPAC get ``var_red`` against DIM."""
    out = []
    for name in estimators:
        name = name.lower()
        if name == "dim":
            out.append(dim_inference(t))
        elif name == "cuped":
            out.append(cuped(t, cuped_covariate))
        elif name == "cupac":
            out.append(cupac(t, k=k, seed=seed, covariates=covariates))
        else:
            raise ValueError(f"unknown estimator {name!r}; choose from {ESTIMATORS}")
    return out
