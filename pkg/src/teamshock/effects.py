"""Per-team treatment effects, split conformal error bounds, and
two-sample distribution comparison.

The individual treatment effect of a team is its observed post-shock
outcome minus the model's counterfactual prediction, both in log1p space.
Conformal intervals bound the unobservable counterfactual prediction error
from held-out test residuals; the Kolmogorov-Smirnov test compares the
no-shock residual distribution against the post-shock effect distribution.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np
import pandas as pd


def compute_ite(observed: pd.Series, predicted: pd.Series, month: int = 0,
                outcome: str = "") -> pd.DataFrame:
    """Elementwise observed - predicted, aligned strictly by repo id.

    Negative values mean decline attributable to the shock.  Unmatched ids
    on either side are an error (listing them), not silent dropping.
    """
    obs_ids = set(observed.index)
    pred_ids = set(predicted.index)
    if obs_ids != pred_ids:
        missing = sorted(obs_ids ^ pred_ids)[:20]
        raise ValueError(f"observed/predicted ids do not match; e.g. {missing}")
    pred = predicted.reindex(observed.index)
    df = pd.DataFrame({
        "repo": observed.index,
        "month": month,
        "outcome": outcome,
        "Y": observed.to_numpy(dtype=float),
        "Y_hat": pred.to_numpy(dtype=float),
    })
    df["ite"] = df["Y"] - df["Y_hat"]
    if not np.all(np.isfinite(df["ite"])):
        raise ValueError("non-finite ITE values; check inputs")
    return df.reset_index(drop=True)


@dataclass
class ConformalInterval:
    d: float
    alpha: float
    n: int
    k: int

    def covers(self, errors) -> np.ndarray:
        return np.abs(np.asarray(errors, dtype=float)) <= self.d


def conformal_interval(test_residuals, alpha: float = 0.05) -> ConformalInterval:
    """Split conformal bound on prediction error.

    d is the k-th smallest absolute test residual with
    k = ceil((n+1)(1-alpha)); the error then falls within [-d, d] with
    probability >= 1-alpha under exchangeability.  k > n yields d = +inf.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must be in (0, 1)")
    residuals = np.asarray(test_residuals, dtype=float)
    n = len(residuals)
    if n < 1:
        raise ValueError("need at least one residual")
    k = math.ceil((n + 1) * (1 - alpha))
    if k > n:
        warnings.warn(
            f"k={k} exceeds n={n}; conformal bound is infinite "
            "(calibration set too small for this alpha)"
        )
        d = float("inf")
    else:
        d = float(np.sort(np.abs(residuals), kind="stable")[k - 1])
    return ConformalInterval(d=d, alpha=alpha, n=n, k=k)


@dataclass
class KSResult:
    statistic: float
    p_value: float
    n_a: int
    n_b: int


def _kolmogorov_sf(lam: float) -> float:
    """Asymptotic Kolmogorov survival function Q(lambda)."""
    if lam < 0.2:
        return 1.0
    total = 0.0
    for i in range(1, 101):
        term = 2.0 * (-1.0) ** (i - 1) * math.exp(-2.0 * i * i * lam * lam)
        total += term
        if abs(term) < 1e-12:
            break
    return min(max(total, 0.0), 1.0)


def ks_two_sample(a, b) -> KSResult:
    """Two-sample Kolmogorov-Smirnov test.

    D is the exact supremum of |ECDF_a - ECDF_b| over pooled sample points
    (ties handled exactly); the p-value uses the asymptotic Kolmogorov
    series with the small-sample correction of the effective size
    n_a*n_b/(n_a+n_b), so it is approximate under heavy ties.
    """
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    n_a, n_b = len(a), len(b)
    if n_a == 0 or n_b == 0:
        raise ValueError("both samples must be nonempty")
    pooled = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, pooled, side="right") / n_a
    cdf_b = np.searchsorted(b, pooled, side="right") / n_b
    d = float(np.max(np.abs(cdf_a - cdf_b)))
    en = math.sqrt(n_a * n_b / (n_a + n_b))
    lam = (en + 0.12 + 0.11 / en) * d
    return KSResult(statistic=d, p_value=_kolmogorov_sf(lam), n_a=n_a, n_b=n_b)


def _summary(values) -> dict:
    v = np.asarray(values, dtype=float)
    q1, med, q3 = np.percentile(v, [25, 50, 75])
    return {
        "n": int(len(v)),
        "mean": float(v.mean()),
        "median": float(med),
        "q1": float(q1),
        "q3": float(q3),
        "sd": float(v.std(ddof=1)) if len(v) > 1 else 0.0,
    }


def residual_distribution_report(test_y, test_y_hat, target_ites,
                                 month: int = 0, outcome: str = "") -> dict:
    """Paired summaries of no-shock test residuals vs. post-shock ITEs,
    with the KS comparison between the two distributions."""
    test_y = np.asarray(test_y, dtype=float)
    test_y_hat = np.asarray(test_y_hat, dtype=float)
    residuals = test_y - test_y_hat
    ites = np.asarray(target_ites, dtype=float)
    if len(residuals) == 0 or len(ites) == 0:
        raise ValueError("both residuals and ITEs must be nonempty")
    ks = ks_two_sample(residuals, ites)
    return {
        "month": month,
        "outcome": outcome,
        "test_residuals": _summary(residuals),
        "target_ites": _summary(ites),
        "ks": {"statistic": ks.statistic, "p_value": ks.p_value,
               "n_residuals": ks.n_a, "n_ites": ks.n_b},
    }
