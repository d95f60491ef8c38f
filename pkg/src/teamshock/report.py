"""Rendering: regression/evaluation tables and standalone SVG plots.

SVG output is generated directly (fixed fonts, fixed float formatting, no
timestamps or random ids) so identical inputs produce identical bytes.
"""

import json
import math

import numpy as np
import pandas as pd

from .heterogeneity import BootstrapReport


def format_sci(x) -> str:
    """Two-significant-digit scientific notation, e.g. 6.7E-01."""
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return f"{x:.1E}"


def bootstrap_table(report: BootstrapReport) -> pd.DataFrame:
    rows = []
    for i, name in enumerate(report.names):
        marker = "*" if report.significant[i] else ""
        rows.append({
            "feature": name,
            "median": format_sci(report.median[i]) + marker,
            "ci95": f"[{format_sci(report.ci_lower[i])}, "
                    f"{format_sci(report.ci_upper[i])}]",
        })
    return pd.DataFrame(rows)


def eval_table(reports) -> pd.DataFrame:
    """Grid of R2 and MSE per model and month, one block per outcome."""
    df = pd.DataFrame([{"model": r.model, "outcome": r.outcome,
                        "month": r.month, "r2": r.r2, "mse": r.mse}
                       for r in reports])
    if df.empty:
        return pd.DataFrame(columns=["outcome", "model", "metric"])
    out = []
    for (outcome, model), grp in df.groupby(["outcome", "model"], sort=True):
        for metric in ("r2", "mse"):
            row = {"outcome": outcome, "model": model, "metric": metric}
            for _, r in grp.iterrows():
                row[f"m{int(r['month'])}"] = round(float(r[metric]), 3)
            out.append(row)
    return pd.DataFrame(out)


def _text_table(df: pd.DataFrame) -> str:
    cols = list(df.columns)
    widths = [max(len(str(c)), *(len(str(v)) for v in df[c])) if len(df) else len(str(c))
              for c in cols]
    lines = ["  ".join(str(c).ljust(w) for c, w in zip(cols, widths))]
    lines.append("  ".join("-" * w for w in widths))
    for _, row in df.iterrows():
        lines.append("  ".join(str(row[c]).ljust(w) for c, w in zip(cols, widths)))
    return "\n".join(lines) + "\n"


def render_table(data, fmt: str, path) -> str:
    """Write a report as csv, json, or aligned text; returns the path."""
    if isinstance(data, BootstrapReport):
        df = bootstrap_table(data)
    elif isinstance(data, pd.DataFrame):
        df = data
    else:
        df = pd.DataFrame(data)
    if fmt == "csv":
        df.to_csv(path, index=False)
    elif fmt == "json":
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(df.to_dict(orient="records"), fh, indent=2, sort_keys=True)
    elif fmt == "text":
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(_text_table(df))
    else:
        raise ValueError(f"unknown table format {fmt!r}")
    return str(path)


# ---------------------------------------------------------------------------
# Minimal deterministic SVG plotting

_F = "%.2f"  # fixed coordinate formatting


class SvgCanvas:
    def __init__(self, width=640, height=360, margin=45):
        self.width = width
        self.height = height
        self.margin = margin
        self.parts = []

    def _fmt(self, v):
        return _F % v

    def polyline(self, points, stroke, width=1.5, dash=None):
        pts = " ".join(f"{self._fmt(x)},{self._fmt(y)}" for x, y in points)
        dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
        self.parts.append(
            f'<polyline fill="none" stroke="{stroke}" '
            f'stroke-width="{width}"{dash_attr} points="{pts}"/>'
        )

    def polygon(self, points, fill, opacity=1.0):
        pts = " ".join(f"{self._fmt(x)},{self._fmt(y)}" for x, y in points)
        self.parts.append(
            f'<polygon fill="{fill}" fill-opacity="{self._fmt(opacity)}" '
            f'stroke="none" points="{pts}"/>'
        )

    def rect(self, x, y, w, h, fill, stroke="none"):
        self.parts.append(
            f'<rect x="{self._fmt(x)}" y="{self._fmt(y)}" width="{self._fmt(w)}" '
            f'height="{self._fmt(h)}" fill="{fill}" stroke="{stroke}"/>'
        )

    def line(self, x1, y1, x2, y2, stroke="#333333", width=1.0):
        self.parts.append(
            f'<line x1="{self._fmt(x1)}" y1="{self._fmt(y1)}" '
            f'x2="{self._fmt(x2)}" y2="{self._fmt(y2)}" '
            f'stroke="{stroke}" stroke-width="{width}"/>'
        )

    def circle(self, x, y, r, fill):
        self.parts.append(
            f'<circle cx="{self._fmt(x)}" cy="{self._fmt(y)}" '
            f'r="{self._fmt(r)}" fill="{fill}"/>'
        )

    def text(self, x, y, content, size=11, anchor="start"):
        self.parts.append(
            f'<text x="{self._fmt(x)}" y="{self._fmt(y)}" '
            f'font-family="monospace" font-size="{size}" '
            f'text-anchor="{anchor}">{content}</text>'
        )

    def to_string(self) -> str:
        body = "\n".join(self.parts)
        return (
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" '
            f'height="{self.height}" viewBox="0 0 {self.width} {self.height}">\n'
            f'<rect width="{self.width}" height="{self.height}" fill="#ffffff"/>\n'
            f"{body}\n</svg>\n"
        )

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_string())
        return str(path)


class _Scale:
    def __init__(self, canvas, x_range, y_range):
        self.c = canvas
        self.x0, self.x1 = x_range
        self.y0, self.y1 = y_range

    def x(self, v):
        m, w = self.c.margin, self.c.width
        span = (self.x1 - self.x0) or 1.0
        return m + (v - self.x0) / span * (w - 2 * m)

    def y(self, v):
        m, h = self.c.margin, self.c.height
        span = (self.y1 - self.y0) or 1.0
        return h - m - (v - self.y0) / span * (h - 2 * m)


def _axes(canvas, scale, title=""):
    m = canvas.margin
    canvas.line(m, canvas.height - m, canvas.width - m, canvas.height - m)
    canvas.line(m, m, m, canvas.height - m)
    canvas.text(m, m - 8, title, size=12)
    canvas.text(m - 5, canvas.height - m + 4, _F % scale.y0, anchor="end", size=9)
    canvas.text(m - 5, m + 4, _F % scale.y1, anchor="end", size=9)


def plot_forecast(observed, forecast, path, title=""):
    """Observed history plus point forecast and nested shaded bands
    (darker band inside the lighter one)."""
    history = np.asarray(observed, dtype=float)
    n = len(history)
    h = len(forecast.point)
    all_vals = [history, forecast.point]
    for level in forecast.levels:
        lo, up = forecast.intervals[level]
        all_vals += [lo, up]
    lo_all = min(float(np.min(v)) for v in all_vals)
    hi_all = max(float(np.max(v)) for v in all_vals)
    canvas = SvgCanvas()
    scale = _Scale(canvas, (0, n + h - 1), (lo_all, hi_all))
    _axes(canvas, scale, title)
    xs_fc = np.arange(n, n + h)
    # lighter, wider band first so the darker one renders inside it
    shades = {95: ("#bcd7f0", 0.9), 80: ("#4f87c5", 0.8)}
    for level in sorted(forecast.levels, reverse=True):
        lo, up = forecast.intervals[level]
        pts = [(scale.x(x), scale.y(v)) for x, v in zip(xs_fc, up)]
        pts += [(scale.x(x), scale.y(v)) for x, v in zip(xs_fc[::-1], lo[::-1])]
        fill, opacity = shades.get(level, ("#cccccc", 0.7))
        canvas.polygon(pts, fill=fill, opacity=opacity)
    if n > 1:
        canvas.polyline(
            [(scale.x(i), scale.y(v)) for i, v in enumerate(history)],
            stroke="#222222")
    else:
        canvas.circle(scale.x(0), scale.y(history[0]), 3, "#222222")
    if h > 1:
        canvas.polyline(
            [(scale.x(x), scale.y(v)) for x, v in zip(xs_fc, forecast.point)],
            stroke="#d62728", dash="4,3")
    return canvas.save(path)


def _box_stats(values):
    v = np.asarray(values, dtype=float)
    q1, med, q3 = np.percentile(v, [25, 50, 75])
    iqr = q3 - q1
    lo = float(max(v.min(), q1 - 1.5 * iqr))
    hi = float(min(v.max(), q3 + 1.5 * iqr))
    return lo, float(q1), float(med), float(q3), hi


def plot_distributions(groups, path, title=""):
    """Side-by-side box summaries, one per (label, values) pair; used for
    per-month ITE distributions next to test residuals."""
    labels = list(groups)
    if not labels:
        raise ValueError("no data to plot")
    stats = {k: _box_stats(groups[k]) for k in labels}
    lo_all = min(s[0] for s in stats.values())
    hi_all = max(s[4] for s in stats.values())
    canvas = SvgCanvas()
    scale = _Scale(canvas, (0, len(labels)), (lo_all, hi_all))
    _axes(canvas, scale, title)
    for i, label in enumerate(labels):
        lo, q1, med, q3, hi = stats[label]
        cx = scale.x(i + 0.5)
        half = 0.28 * (scale.x(1) - scale.x(0))
        canvas.line(cx, scale.y(lo), cx, scale.y(hi), stroke="#555555")
        canvas.rect(cx - half, scale.y(q3), 2 * half,
                    scale.y(q1) - scale.y(q3), fill="#9ecae1", stroke="#333333")
        canvas.line(cx - half, scale.y(med), cx + half, scale.y(med),
                    stroke="#d62728", width=1.5)
        canvas.text(cx, canvas.height - canvas.margin + 16, str(label),
                    size=9, anchor="middle")
    zero_y = scale.y(0.0)
    if lo_all < 0 < hi_all:
        canvas.line(canvas.margin, zero_y, canvas.width - canvas.margin,
                    zero_y, stroke="#999999", width=0.8)
    return canvas.save(path)


def plot_series(values, path, title=""):
    values = np.asarray(values, dtype=float)
    canvas = SvgCanvas()
    scale = _Scale(canvas, (0, max(len(values) - 1, 1)),
                   (float(values.min()), float(values.max())))
    _axes(canvas, scale, title)
    if len(values) > 1:
        canvas.polyline([(scale.x(i), scale.y(v)) for i, v in enumerate(values)],
                        stroke="#222222")
    else:
        canvas.circle(scale.x(0), scale.y(values[0]), 3, "#222222")
    return canvas.save(path)
