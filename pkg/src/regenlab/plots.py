"""Minimal SVG line plots and histograms (no plotting dependency)."""

import logging
import math
import os
from xml.sax.saxutils import escape

import numpy as np

log = logging.getLogger(__name__)

W, H = 640, 400
ML, MR, MT, MB = 70, 20, 40, 50
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")


def _fmt(v):
    return f"{v:.4g}"


def _frame(title, xlabel, ylabel, xlim, ylim):
    x0, x1 = xlim
    y0, y1 = ylim
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        f'<rect width="{W}" height="{H}" fill="white"/>',
        f'<text x="{W / 2}" y="22" text-anchor="middle" font-size="15">{escape(title)}</text>',
        f'<line x1="{ML}" y1="{H - MB}" x2="{W - MR}" y2="{H - MB}" stroke="black"/>',
        f'<line x1="{ML}" y1="{MT}" x2="{ML}" y2="{H - MB}" stroke="black"/>',
        f'<text x="{W / 2}" y="{H - 12}" text-anchor="middle" font-size="12">{escape(xlabel)}</text>',
        f'<text x="16" y="{H / 2}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 16 {H / 2})">{escape(ylabel)}</text>',
    ]
    for k in range(5):
        fx = x0 + (x1 - x0) * k / 4
        fy = y0 + (y1 - y0) * k / 4
        px = ML + (W - ML - MR) * k / 4
        py = H - MB - (H - MT - MB) * k / 4
        parts.append(f'<text x="{px:.1f}" y="{H - MB + 16}" text-anchor="middle" font-size="10">{_fmt(fx)}</text>')
        parts.append(f'<text x="{ML - 6}" y="{py + 3:.1f}" text-anchor="end" font-size="10">{_fmt(fy)}</text>')
    return parts


def _scaler(lim, a, b):
    lo, hi = lim
    span = hi - lo if hi > lo else 1.0
    return lambda v: a + (v - lo) / span * (b - a)


def _limits(values):
    v = np.asarray([x for x in values if math.isfinite(x)], dtype=float)
    if v.size == 0:
        return 0.0, 1.0
    lo, hi = float(v.min()), float(v.max())
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def line_plot(series, title="", xlabel="", ylabel=""):
    """SVG for [(x, y, label), ...]."""
    xs = [v for x, _, _ in series for v in x]
    ys = [v for _, y, _ in series for v in y]
    xlim, ylim = _limits(xs), _limits(ys)
    sx = _scaler(xlim, ML, W - MR)
    sy = _scaler(ylim, H - MB, MT)
    parts = _frame(title, xlabel, ylabel, xlim, ylim)
    for i, (x, y, label) in enumerate(series):
        c = COLORS[i % len(COLORS)]
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(x, y) if math.isfinite(b))
        parts.append(f'<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{pts}"/>')
        if label:
            parts.append(f'<text x="{W - MR - 4}" y="{MT + 14 * (i + 1)}" text-anchor="end" '
                         f'font-size="11" fill="{c}">{escape(label)}</text>')
    parts.append("</svg>")
    return "\n".join(parts)


def histogram(values, bins=20, title="", xlabel=""):
    """SVG histogram; returns (svg, counts)."""
    values = np.asarray(values, dtype=float)
    counts, edges = np.histogram(values, bins=bins)
    xlim = (float(edges[0]), float(edges[-1]))
    ylim = (0.0, float(max(counts.max(), 1)) * 1.05)
    sx = _scaler(xlim, ML, W - MR)
    sy = _scaler(ylim, H - MB, MT)
    parts = _frame(title, xlabel, "count", xlim, ylim)
    for c, a, b in zip(counts, edges[:-1], edges[1:]):
        x, w = sx(a), max(sx(b) - sx(a) - 1, 0.5)
        parts.append(f'<rect x="{x:.2f}" y="{sy(c):.2f}" width="{w:.2f}" '
                     f'height="{sy(0) - sy(c):.2f}" fill="{COLORS[0]}" data-count="{int(c)}"/>')
    parts.append("</svg>")
    return "\n".join(parts), counts


PLOT_KINDS = ("trace", "histogram", "encounter", "stability")


def emit_plots(summary, kinds, out_dir):
    """Write the requested SVGs from ``summary['series']``; returns written paths."""
    series = summary.get("series", {})
    written = []
    for kind in kinds:
        if kind not in PLOT_KINDS:
            log.warning("unknown plot kind %r skipped", kind)
            continue
        path = os.path.join(out_dir, f"{kind}.svg")
        if kind == "trace" and "velocity_trace" in series:
            s = series["velocity_trace"]
            svg = line_plot([(s["t"], s["mean"], "mean l.X_t/t")], "velocity trace", "t", "l.X_t / t")
        elif kind == "histogram" and "tau_increments" in series:
            svg, _ = histogram(series["tau_increments"], title="regeneration increments",
                               xlabel="tau_{k+1} - tau_k")
        elif kind == "encounter" and "encounter" in series:
            s = series["encounter"]
            svg = line_plot([(s["L"], s["gamma"], "estimate"), (s["L"], s["ci_low"], "95% low"),
                             (s["L"], s["ci_high"], "95% high")],
                            "encounter probability", "L", "probability")
        elif kind == "stability" and "running_mean" in series:
            rm = series["running_mean"]
            svg = line_plot([(list(range(1, len(rm) + 1)), rm, "running mean")],
                            "first-block running mean", "sample size", "l.X_tau1")
        else:
            log.warning("series for plot %r missing; skipped", kind)
            continue
        with open(path, "w") as fh:
            fh.write(svg)
        written.append(path)
    return written
