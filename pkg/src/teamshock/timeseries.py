"""Monthly aggregation, seasonal-trend decomposition, and interval forecasts.

The forecasting pipeline mirrors the platform-level analysis: aggregate a
metric per calendar month (UTC), decompose it additively into trend +
seasonal + remainder, forecast the seasonally adjusted series with Holt
linear-trend exponential smoothing, re-add the final seasonal cycle, and
attach Gaussian 80/95% prediction bands.
"""

from dataclasses import dataclass, field
from statistics import NormalDist

import numpy as np
import pandas as pd

from .base import BaseEstimator, check_is_fitted

METRICS = (
    "active_repos",
    "opened_pull_requests",
    "pushes_per_repo",
    "active_members_per_repo",
    "pushes_total",
)


def month_index(year: int, month: int) -> int:
    return year * 12 + (month - 1)

def month_from_index(idx: int):
    return idx // 12, idx % 12 + 1

def month_label(idx: int) -> str:
    y, m = month_from_index(idx)
    return f"{y:04d}-{m:02d}"


@dataclass
class MonthlySeries:
    metric: str
    start_month: int  # month_index encoding
    values: np.ndarray

    def month_labels(self):
        return [month_label(self.start_month + i) for i in range(len(self.values))]


def aggregate_monthly(events: pd.DataFrame, metric: str,
                      start=None, end=None) -> MonthlySeries:
    """Aggregate one platform metric over active repositories per month.

    A repository is active in a month iff it has at least one Contribution
    event that month (attention and excluded events never activate it).
    ``start``/``end`` are inclusive (year, month) tuples; they default to
    the span of contribution activity in the data.
    """
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}; choose from {METRICS}")
    contrib = events[events["activity_class"] == "contribution"].copy()
    if contrib.empty:
        raise ValueError("no contribution events to aggregate")
    ts = contrib["ts"].dt
    contrib["month"] = ts.year * 12 + (ts.month - 1)

    first = int(contrib["month"].min()) if start is None else month_index(*start)
    last = int(contrib["month"].max()) if end is None else month_index(*end)
    if last < first:
        raise ValueError("empty month range")
    n = last - first + 1
    contrib = contrib[(contrib["month"] >= first) & (contrib["month"] <= last)]

    values = np.zeros(n)
    if metric == "active_repos":
        counts = contrib.groupby("month")["repo"].nunique()
    elif metric == "opened_pull_requests":
        prs = contrib[contrib["event_type"] == "pull_request_open"]
        counts = prs.groupby("month").size()
    elif metric == "pushes_total":
        pushes = contrib[contrib["event_type"] == "push"]
        counts = pushes.groupby("month").size()
    elif metric == "pushes_per_repo":
        pushes = contrib[contrib["event_type"] == "push"]
        per_month = pushes.groupby("month").size()
        active = contrib.groupby("month")["repo"].nunique()
        counts = (per_month.reindex(active.index, fill_value=0) / active)
    else:  # active_members_per_repo
        per_repo = contrib.groupby(["month", "repo"])["actor"].nunique()
        counts = per_repo.groupby("month").mean()

    for month, value in counts.items():
        values[int(month) - first] = float(value)
    return MonthlySeries(metric=metric, start_month=first, values=values)


# ---------------------------------------------------------------------------
# STL-style decomposition (periodic seasonal + loess trend)

@dataclass
class Decomposition:
    trend: np.ndarray
    seasonal: np.ndarray
    remainder: np.ndarray


def _loess(y: np.ndarray, window: int, weights: np.ndarray) -> np.ndarray:
    """Local linear regression with tricube neighborhood weights.

    ``weights`` are the robustness weights applied multiplicatively.
    """
    n = len(y)
    x = np.arange(n, dtype=float)
    half = window // 2
    out = np.empty(n)
    for i in range(n):
        lo = max(0, min(i - half, n - window))
        hi = min(n, lo + window)
        xs = x[lo:hi]
        ys = y[lo:hi]
        dist = np.abs(xs - i)
        dmax = max(dist.max(), 1.0)
        w = (1 - (dist / dmax) ** 3) ** 3
        w = np.clip(w, 0.0, None) * weights[lo:hi]
        sw = w.sum()
        if sw <= 0:
            out[i] = ys.mean()
            continue
        xm = (w * xs).sum() / sw
        ym = (w * ys).sum() / sw
        sxx = (w * (xs - xm) ** 2).sum()
        if sxx < 1e-12:
            out[i] = ym
        else:
            slope = (w * (xs - xm) * (ys - ym)).sum() / sxx
            out[i] = ym + slope * (i - xm)
    return out


def stl_decompose(values, period: int = 12, trend_window: int = 23,
                  inner_iterations: int = 2,
                  robust_iterations: int = 1) -> Decomposition:
    """Additive seasonal-trend decomposition with a periodic seasonal.

    The seasonal component is the (robustness-weighted) mean of the
    detrended series at each cycle position, centered to zero mean; the
    trend is a loess of the deseasonalized series.  The remainder is
    defined as ``x - trend - seasonal``, so additivity is exact.
    """
    x = np.asarray(values, dtype=float)
    n = len(x)
    if n < 2 * period:
        raise ValueError(f"series length {n} < 2x period {period}")
    if np.all(x == x[0]):
        # constant series: decomposition is exact, not up to loess rounding
        return Decomposition(trend=x.copy(), seasonal=np.zeros(n),
                             remainder=np.zeros(n))
    if trend_window % 2 == 0:
        trend_window += 1
    trend_window = min(trend_window, n if n % 2 == 1 else n - 1)

    positions = np.arange(n) % period
    rob = np.ones(n)
    trend = _loess(x, trend_window, rob)
    seasonal = np.zeros(n)
    for _ in range(robust_iterations + 1):
        for _ in range(inner_iterations):
            detrended = x - trend
            cycle = np.empty(period)
            for pos in range(period):
                mask = positions == pos
                w = rob[mask]
                cycle[pos] = (
                    np.average(detrended[mask], weights=w)
                    if w.sum() > 0 else detrended[mask].mean()
                )
            cycle -= cycle.mean()
            seasonal = cycle[positions]
            trend = _loess(x - seasonal, trend_window, rob)
        remainder = x - trend - seasonal
        # bisquare robustness weights against outliers in the remainder
        scale = 6.0 * np.median(np.abs(remainder))
        if scale <= 0:
            rob = np.ones(n)
        else:
            u = np.clip(np.abs(remainder) / scale, 0.0, 1.0)
            rob = (1 - u**2) ** 2
    remainder = x - trend - seasonal
    return Decomposition(trend=trend, seasonal=seasonal, remainder=remainder)


# ---------------------------------------------------------------------------
# Holt linear-trend exponential smoothing

#: Documented smoothing-parameter grid; SSE-minimizing pair wins, ties by
#: grid order.
HOLT_ALPHA_GRID = tuple(np.round(np.arange(0.02, 0.99, 0.06), 2))
HOLT_BETA_GRID = tuple(np.round(np.arange(0.02, 0.99, 0.12), 2))


class HoltForecaster(BaseEstimator):
    """Additive-error Holt linear-trend smoother with grid-fit parameters.

    fit(y) selects (alpha, beta) minimizing in-sample one-step SSE;
    predict(horizon) returns point forecasts and per-step variances that
    grow per the standard linear-trend formula
    ``sigma2 * (1 + sum_{j<h} (alpha + beta*j)^2)``.
    """

    def __init__(self, alpha=None, beta=None):
        self.alpha = alpha
        self.beta = beta

    @staticmethod
    def _run(y, alpha, beta):
        level, slope = y[0], y[1] - y[0]
        sse = 0.0
        for t in range(1, len(y)):
            pred = level + slope
            err = y[t] - pred
            sse += err * err
            new_level = alpha * y[t] + (1 - alpha) * (level + slope)
            slope = beta * (new_level - level) + (1 - beta) * slope
            level = new_level
        return level, slope, sse

    def fit(self, y):
        y = np.asarray(y, dtype=float)
        if len(y) < 10:
            raise ValueError("Holt smoothing needs at least 10 observations")
        if np.ptp(y) == 0.0:
            # degenerate constant series: flat forecast, zero variance
            self.alpha_, self.beta_ = 0.5, 0.5
            self.level_, self.slope_, self.sigma2_ = y[0], 0.0, 0.0
            return self
        if self.alpha is not None and self.beta is not None:
            candidates = [(self.alpha, self.beta)]
        else:
            candidates = [(a, b) for a in HOLT_ALPHA_GRID for b in HOLT_BETA_GRID]
        best = None
        for a, b in candidates:
            level, slope, sse = self._run(y, a, b)
            if best is None or sse < best[0]:
                best = (sse, a, b, level, slope)
        sse, self.alpha_, self.beta_, self.level_, self.slope_ = best
        self.sigma2_ = sse / (len(y) - 1)
        return self

    def predict(self, horizon: int):
        check_is_fitted(self, "level_")
        h = np.arange(1, horizon + 1)
        point = self.level_ + self.slope_ * h
        j = np.arange(horizon)
        terms = np.concatenate([[0.0], (self.alpha_ + self.beta_ * j[1:]) ** 2])
        sigma2 = self.sigma2_ * (1 + np.cumsum(terms))
        return point, sigma2


def ets_forecast(values, horizon: int):
    """Fit Holt linear-trend smoothing and forecast ``horizon`` steps."""
    model = HoltForecaster().fit(values)
    point, sigma2 = model.predict(horizon)
    return {"point": point, "sigma2": sigma2, "alpha": model.alpha_,
            "beta": model.beta_}


# ---------------------------------------------------------------------------
# STL + ETS forecast with Gaussian intervals

@dataclass
class Forecast:
    start_month: int
    point: np.ndarray
    intervals: dict  # level -> (lower, upper)
    levels: tuple = (80, 95)

    def lower(self, level):
        return self.intervals[level][0]

    def upper(self, level):
        return self.intervals[level][1]


def forecast_with_intervals(series: MonthlySeries, horizon: int = 12,
                            levels=(80, 95), period: int = 12,
                            **stl_kwargs) -> Forecast:
    """Deseasonalize with STL, forecast with Holt, re-add the final seasonal
    cycle, and wrap Gaussian prediction bands at the requested levels."""
    decomp = stl_decompose(series.values, period=period, **stl_kwargs)
    adjusted = series.values - decomp.seasonal
    fc = ets_forecast(adjusted, horizon)
    n = len(series.values)
    # seasonal value for each future month, taken at its cycle position
    positions = (np.arange(n, n + horizon)) % period
    cycle_by_pos = np.empty(period)
    for pos in range(period):
        idx = np.where(np.arange(n) % period == pos)[0][-1]
        cycle_by_pos[pos] = decomp.seasonal[idx]
    seasonal_future = cycle_by_pos[positions]

    point = fc["point"] + seasonal_future
    sd = np.sqrt(fc["sigma2"])
    intervals = {}
    for level in sorted(levels):
        z = NormalDist().inv_cdf(0.5 + level / 200.0)
        intervals[level] = (point - z * sd, point + z * sd)
    return Forecast(start_month=series.start_month + n, point=point,
                    intervals=intervals, levels=tuple(sorted(levels)))


@dataclass
class GapReport:
    metric: str
    rows: pd.DataFrame = field(default=None)

    def to_csv(self, path):
        self.rows.to_csv(path, index=False, float_format="%.6g")


def overall_effect(observed, forecast: Forecast, metric: str = "") -> GapReport:
    """Per-month gap between observed values and the counterfactual
    forecast, with inside/outside-band flags at each interval level."""
    obs = np.asarray(observed, dtype=float)
    if len(obs) != len(forecast.point):
        raise ValueError(
            f"observed length {len(obs)} != forecast horizon {len(forecast.point)}"
        )
    rows = {
        "month": [month_label(forecast.start_month + i) for i in range(len(obs))],
        "observed": obs,
        "point": forecast.point,
        "gap": obs - forecast.point,
    }
    flags = np.full(len(obs), "inside", dtype=object)
    for level in forecast.levels:
        lo, hi = forecast.intervals[level]
        rows[f"lo{level}"] = lo
        rows[f"hi{level}"] = hi
        outside = (obs < lo) | (obs > hi)
        flags[outside] = f"outside{level}"
    rows["flag"] = flags
    order = ["month", "observed", "point"]
    for level in forecast.levels:
        order += [f"lo{level}", f"hi{level}"]
    order += ["gap", "flag"]
    return GapReport(metric=metric, rows=pd.DataFrame(rows)[order])
