"""Relating treatment effects to team properties.

Collinear features are pruned by complete-linkage clustering on Spearman
correlations, survivors are checked with variance inflation factors, and
coefficients come from 1,000 residual-infused bootstrapped OLS regressions:
each iteration regresses y - (y_hat + eps) on the selected features, with
eps resampled from the empirical test-residual pool truncated to the
conformal bound [-d, d].
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .base import rng_for

#: Registry entries whose raw scale is long-tailed and which therefore enter
#: the regressions log1p-transformed (other long-tailed entries are already
#: stored transformed).
LOG_BEFORE_REGRESSION = ("n_members", "n_dedicated_members")


def prepare_design(features: pd.DataFrame) -> pd.DataFrame:
    """Apply the documented log transforms before correlation/clustering."""
    out = features.copy()
    for name in LOG_BEFORE_REGRESSION:
        if name in out.columns:
            out[name] = np.log1p(out[name])
    return out


def _midrank(values: np.ndarray) -> np.ndarray:
    """Average ranks with mid-rank ties (ranks start at 1)."""
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(len(values), dtype=float)
    sorted_vals = values[order]
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman_matrix(X) -> pd.DataFrame:
    """Pairwise Spearman correlations (mid-rank ties, Pearson on ranks).

    Constant columns get NaN correlations with everything (unit diagonal
    kept) and a warning.
    """
    df = X if isinstance(X, pd.DataFrame) else pd.DataFrame(np.asarray(X, float))
    if len(df) < 3:
        raise ValueError("need at least 3 rows for correlations")
    names = list(df.columns)
    ranks = np.column_stack([_midrank(df[c].to_numpy(dtype=float)) for c in names])
    sd = ranks.std(axis=0)
    constant = sd == 0
    if constant.any():
        warnings.warn(
            f"constant columns have undefined correlations: "
            f"{[n for n, c in zip(names, constant) if c]}"
        )
    with np.errstate(invalid="ignore", divide="ignore"):
        corr = np.corrcoef(ranks, rowvar=False)
    corr[constant, :] = np.nan
    corr[:, constant] = np.nan
    np.fill_diagonal(corr, 1.0)
    return pd.DataFrame(corr, index=names, columns=names)


@dataclass
class ClusterSelection:
    clusters: list          # list of lists of feature names
    representatives: list   # one name per cluster, same order
    threshold: float

    @property
    def dropped(self):
        reps = set(self.representatives)
        return [name for cluster in self.clusters for name in cluster
                if name not in reps]


def cluster_features(corr: pd.DataFrame, threshold: float = 0.7) -> ClusterSelection:
    """Complete-linkage agglomeration on 1 - |rho|, cut so that every
    multi-feature cluster has all pairwise |rho| strictly above threshold.

    The representative of each cluster is the most central member (highest
    mean |rho| to its peers), ties by input column order.
    """
    names = list(corr.columns)
    absr = np.abs(corr.to_numpy(dtype=float))
    absr = np.where(np.isnan(absr), 0.0, absr)  # undefined => never clustered
    dist = 1.0 - absr
    cut = 1.0 - threshold

    clusters = [[i] for i in range(len(names))]
    while True:
        best = None
        for a in range(len(clusters)):
            for b in range(a + 1, len(clusters)):
                complete = max(dist[i, j] for i in clusters[a]
                               for j in clusters[b])
                if complete < cut and (best is None or complete < best[0]):
                    best = (complete, a, b)
        if best is None:
            break
        _, a, b = best
        clusters[a] = clusters[a] + clusters[b]
        del clusters[b]

    clusters.sort(key=lambda c: min(c))
    out_clusters, reps = [], []
    for cluster in clusters:
        members = sorted(cluster)
        if len(members) == 1:
            rep = members[0]
        else:
            centrality = [
                np.mean([absr[i, j] for j in members if j != i]) for i in members
            ]
            rep = members[int(np.argmax(centrality))]
        out_clusters.append([names[i] for i in members])
        reps.append(names[rep])
    return ClusterSelection(clusters=out_clusters, representatives=reps,
                            threshold=threshold)


def vif(X) -> pd.Series:
    """Variance inflation factor per feature: 1/(1 - R2 of the auxiliary
    regression of that feature on all others, with intercept).

    Perfect collinearity reports +inf.
    """
    df = X if isinstance(X, pd.DataFrame) else pd.DataFrame(np.asarray(X, float))
    n, p = df.shape
    if n <= p:
        raise ValueError(f"need more rows ({n}) than features ({p}) for VIF")
    arr = df.to_numpy(dtype=float)
    out = {}
    for j, name in enumerate(df.columns):
        y = arr[:, j]
        others = np.delete(arr, j, axis=1)
        design = np.column_stack([np.ones(n), others])
        coef, _, _, _ = np.linalg.lstsq(design, y, rcond=None)
        resid = y - design @ coef
        sst = float(np.sum((y - y.mean()) ** 2))
        if sst <= 0:
            out[name] = float("nan")
            continue
        r2 = 1.0 - float(np.sum(resid**2)) / sst
        out[name] = float("inf") if r2 >= 1.0 - 1e-12 else 1.0 / (1.0 - r2)
    return pd.Series(out)


@dataclass
class OLSFit:
    names: list
    coefficients: np.ndarray
    standard_errors: np.ndarray
    r2: float
    residuals: np.ndarray


class RankDeficientError(np.linalg.LinAlgError):
    def __init__(self, columns):
        self.columns = columns
        super().__init__(f"design matrix is rank deficient; involved columns: {columns}")


def add_intercept(X: pd.DataFrame) -> pd.DataFrame:
    out = X.copy()
    out.insert(0, "const", 1.0)
    return out


def ols(X, y) -> OLSFit:
    """Least squares via QR; X must already carry its intercept column.

    Rank deficiency is an error naming the dependent columns rather than a
    silent column drop.
    """
    df = X if isinstance(X, pd.DataFrame) else pd.DataFrame(np.asarray(X, float))
    names = list(df.columns)
    A = df.to_numpy(dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = A.shape
    if n <= p:
        raise ValueError(f"need n > p (+intercept); got n={n}, p={p}")
    q, r = np.linalg.qr(A)
    diag = np.abs(np.diag(r))
    tol = max(n, p) * np.finfo(float).eps * (diag.max() if diag.size else 0.0)
    bad = diag <= tol
    if bad.any():
        raise RankDeficientError([names[i] for i in np.where(bad)[0]])
    coef = np.linalg.solve(r, q.T @ y)
    resid = y - A @ coef
    sigma2 = float(resid @ resid) / (n - p)
    rinv = np.linalg.solve(r, np.eye(p))
    cov = sigma2 * (rinv @ rinv.T)
    se = np.sqrt(np.diag(cov))
    sst = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(resid @ resid) / sst if sst > 0 else float("nan")
    return OLSFit(names=names, coefficients=coef, standard_errors=se,
                  r2=r2, residuals=resid)


@dataclass
class BootstrapReport:
    names: list
    median: np.ndarray
    ci_lower: np.ndarray
    ci_upper: np.ndarray
    significant: np.ndarray
    iterations: int
    seed: int
    month: int = 0
    outcome: str = ""
    coefficient_draws: np.ndarray = field(default=None, repr=False)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "feature": self.names,
            "median": self.median,
            "ci_lower": self.ci_lower,
            "ci_upper": self.ci_upper,
            "significant": self.significant,
        })


def bootstrap_regress(X, Y, Y_hat, residual_pool, d, iterations: int = 1000,
                      seed: int = 0, ci: float = 95.0,
                      shared_draw: bool = False, month: int = 0,
                      outcome: str = "") -> BootstrapReport:
    """Residual-infused bootstrapped OLS of the shock effect on features.

    Per iteration, eps is resampled from the empirical residual pool
    truncated to [-d, d] (i.i.d. per observation by default; one shared
    draw per iteration behind ``shared_draw``), the dependent variable is
    Y - (Y_hat + eps), and OLS coefficients are recorded.  The report holds
    per-coefficient median, percentile CI, and a significance flag (CI
    excludes zero).  Deterministic given seed; iteration i draws from the
    stream hash(seed, i).
    """
    df = X if isinstance(X, pd.DataFrame) else pd.DataFrame(np.asarray(X, float))
    names = list(df.columns)
    A = df.to_numpy(dtype=float)
    Y = np.asarray(Y, dtype=float)
    Y_hat = np.asarray(Y_hat, dtype=float)
    pool = np.asarray(residual_pool, dtype=float)
    pool = pool[np.abs(pool) <= d]
    if len(pool) == 0:
        raise ValueError("no residuals fall inside the conformal bound [-d, d]")

    n, p = A.shape
    # rank check once: a deficiency mid-bootstrap would silently change
    # coefficient meaning, so abort up front
    q, r = np.linalg.qr(A)
    diag = np.abs(np.diag(r))
    tol = max(n, p) * np.finfo(float).eps * (diag.max() if diag.size else 0.0)
    if (diag <= tol).any():
        raise RankDeficientError([names[i] for i in np.where(diag <= tol)[0]])

    eps = np.empty((n, iterations))
    for i in range(iterations):
        rng = rng_for(seed, "bootstrap", i)
        if shared_draw:
            eps[:, i] = rng.choice(pool, size=1)[0]
        else:
            eps[:, i] = rng.choice(pool, size=n, replace=True)
    dep = (Y - Y_hat)[:, None] - eps
    coefs = np.linalg.solve(r, q.T @ dep).T  # iterations x p

    half = (100.0 - ci) / 2.0
    lo, med, hi = np.percentile(coefs, [half, 50.0, 100.0 - half], axis=0)
    significant = (lo > 0) | (hi < 0)
    return BootstrapReport(names=names, median=med, ci_lower=lo, ci_upper=hi,
                           significant=significant, iterations=iterations,
                           seed=seed, month=month, outcome=outcome,
                           coefficient_draws=coefs)


def multi_month_report(reports: dict) -> pd.DataFrame:
    """One row per feature, one column per month (median, '*' when
    significant), plus a sign-consistency flag.

    ``reports`` maps month -> BootstrapReport.  Missing months render
    empty, not zero.
    """
    months = sorted(reports)
    all_names = []
    for report in reports.values():
        for name in report.names:
            if name not in all_names:
                all_names.append(name)
    rows = []
    for name in all_names:
        row = {"feature": name}
        signs = []
        for month in months:
            report = reports.get(month)
            if report is None or name not in report.names:
                row[f"month_{month}"] = ""
                continue
            i = report.names.index(name)
            marker = "*" if report.significant[i] else ""
            row[f"month_{month}"] = f"{report.median[i]:.1E}{marker}"
            if report.significant[i]:
                signs.append(1 if report.median[i] > 0 else -1)
        if not signs:
            flag = "n.s."
        elif all(s > 0 for s in signs):
            flag = "stable+"
        elif all(s < 0 for s in signs):
            flag = "stable-"
        else:
            flag = "sign-change"
        row["consistency"] = flag
        rows.append(row)
    return pd.DataFrame(rows)
