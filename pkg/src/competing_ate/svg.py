"""Minimal standalone SVG charts (axes, polylines, bars, legends)."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d")


def _ticks(lo, hi, count=5):
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / count
    mag = 10 ** np.floor(np.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=raw)
    start = np.ceil(lo / step) * step
    return [float(v) for v in np.arange(start, hi + step * 1e-9, step)]


def _label(v):
    return f"{v:.4g}"


class _Panel:
    def __init__(self, x0, y0, w, h, xlim, ylim):
        self.x0, self.y0, self.w, self.h = x0, y0, w, h
        self.xlim, self.ylim = xlim, ylim

    def x(self, v):
        lo, hi = self.xlim
        return self.x0 + (v - lo) / (hi - lo) * self.w

    def y(self, v):
        lo, hi = self.ylim
        return self.y0 + self.h - (v - lo) / (hi - lo) * self.h

    def axes(self, title, xlabel, ylabel, xticks=None, xticklabels=None):
        out = [f'<rect x="{self.x0}" y="{self.y0}" width="{self.w}" height="{self.h}" '
               'fill="none" stroke="#333"/>',
               f'<text x="{self.x0 + self.w / 2}" y="{self.y0 - 8}" text-anchor="middle" '
               f'font-size="13">{escape(title)}</text>',
               f'<text x="{self.x0 + self.w / 2}" y="{self.y0 + self.h + 34}" '
               f'text-anchor="middle" font-size="11">{escape(xlabel)}</text>',
               f'<text x="{self.x0 - 42}" y="{self.y0 + self.h / 2}" text-anchor="middle" '
               f'font-size="11" transform="rotate(-90 {self.x0 - 42} {self.y0 + self.h / 2})">'
               f'{escape(ylabel)}</text>']
        xticks = _ticks(*self.xlim) if xticks is None else xticks
        labels = [_label(v) for v in xticks] if xticklabels is None else xticklabels
        for v, lab in zip(xticks, labels):
            px = self.x(v)
            out.append(f'<line x1="{px:.2f}" y1="{self.y0 + self.h}" x2="{px:.2f}" '
                       f'y2="{self.y0 + self.h + 4}" stroke="#333"/>')
            out.append(f'<text x="{px:.2f}" y="{self.y0 + self.h + 16}" text-anchor="middle" '
                       f'font-size="10">{escape(str(lab))}</text>')
        for v in _ticks(*self.ylim):
            py = self.y(v)
            out.append(f'<line x1="{self.x0 - 4}" y1="{py:.2f}" x2="{self.x0}" y2="{py:.2f}" '
                       'stroke="#333"/>')
            out.append(f'<line x1="{self.x0}" y1="{py:.2f}" x2="{self.x0 + self.w}" '
                       f'y2="{py:.2f}" stroke="#ddd"/>')
            out.append(f'<text x="{self.x0 - 6}" y="{py + 3:.2f}" text-anchor="end" '
                       f'font-size="10">{_label(v)}</text>')
        return out


def _document(width, height, body):
    return ("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}" font-family="sans-serif">\n'
            f'<rect width="{width}" height="{height}" fill="white"/>\n'
            + "\n".join(body) + "\n</svg>\n")


def _legend(names, x, y):
    out = []
    for i, name in enumerate(names):
        color = PALETTE[i % len(PALETTE)]
        out.append(f'<rect x="{x}" y="{y + 16 * i}" width="12" height="12" fill="{color}"/>')
        out.append(f'<text x="{x + 18}" y="{y + 16 * i + 10}" font-size="11">'
                   f'{escape(name)}</text>')
    return out


def line_panels(panels, series_names, xlabel, ylabel, reference=None, ylim=None,
                title=""):
    """Grid of line charts sharing x/y ranges.

    ``panels`` is a list of ``(title, {series: (x, y)})``; ``reference`` draws a
    dashed horizontal line (e.g. the nominal level).
    """
    cols = min(3, max(1, len(panels)))
    rows = -(-len(panels) // cols)
    pw, ph = 240, 180
    width = 70 + cols * (pw + 70) + 140
    height = 50 + rows * (ph + 80)
    xs = [v for _, s in panels for x, _ in s.values() for v in x]
    ys = [v for _, s in panels for _, y in s.values() for v in y if np.isfinite(v)]
    if reference is not None:
        ys.append(reference)
    xlim = (min(xs), max(xs)) if xs else (0.0, 1.0)
    if xlim[0] == xlim[1]:
        xlim = (xlim[0] - 1, xlim[1] + 1)
    if ylim is None:
        lo, hi = (min(ys), max(ys)) if ys else (0.0, 1.0)
        pad = 0.05 * (hi - lo or 1.0)
        ylim = (lo - pad, hi + pad)
    body = []
    if title:
        body.append(f'<text x="{width / 2}" y="20" text-anchor="middle" font-size="15">'
                    f'{escape(title)}</text>')
    for k, (ptitle, series) in enumerate(panels):
        r, c = divmod(k, cols)
        p = _Panel(70 + c * (pw + 70), 50 + r * (ph + 80), pw, ph, xlim, ylim)
        body += p.axes(ptitle, xlabel, ylabel)
        if reference is not None:
            py = p.y(reference)
            body.append(f'<line x1="{p.x0}" y1="{py:.2f}" x2="{p.x0 + p.w}" y2="{py:.2f}" '
                        'stroke="#555" stroke-dasharray="4 3"/>')
        for i, name in enumerate(series_names):
            if name not in series:
                continue
            x, y = series[name]
            pts = " ".join(f"{p.x(a):.2f},{p.y(b):.2f}" for a, b in zip(x, y) if np.isfinite(b))
            color = PALETTE[i % len(PALETTE)]
            body.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                        'stroke-width="1.8"/>')
            for a, b in zip(x, y):
                if np.isfinite(b):
                    body.append(f'<circle cx="{p.x(a):.2f}" cy="{p.y(b):.2f}" r="2.5" '
                                f'fill="{color}"/>')
    body += _legend(series_names, width - 130, 50)
    return _document(width, height, body)


def grouped_bars(groups, series_names, values, ylabel, xlabel="", title=""):
    """Grouped bar chart; ``values[g][s]`` is the bar height (NaN skipped)."""
    pw, ph = max(320, 60 * len(groups) * max(1, len(series_names)) // 2), 260
    width, height = pw + 260, ph + 110
    vals = [v for g in values for v in g if np.isfinite(v)]
    hi = max(vals) if vals else 1.0
    p = _Panel(70, 50, pw, ph, (0.0, float(len(groups))), (0.0, 1.08 * hi or 1.0))
    body = []
    if title:
        body.append(f'<text x="{width / 2}" y="20" text-anchor="middle" font-size="15">'
                    f'{escape(title)}</text>')
    body += p.axes("", xlabel, ylabel, xticks=[g + 0.5 for g in range(len(groups))],
                   xticklabels=[str(g) for g in groups])
    m = max(1, len(series_names))
    bw = 0.8 / m
    for g in range(len(groups)):
        for s in range(m):
            v = values[g][s]
            if not np.isfinite(v):
                continue
            x0 = p.x(g + 0.1 + s * bw)
            x1 = p.x(g + 0.1 + (s + 1) * bw)
            y = p.y(v)
            body.append(f'<rect x="{x0:.2f}" y="{y:.2f}" width="{x1 - x0:.2f}" '
                        f'height="{p.y0 + p.h - y:.2f}" fill="{PALETTE[s % len(PALETTE)]}"/>')
    body += _legend(series_names, width - 170, 50)
    return _document(width, height, body)


def coverage_charts(rows, level=0.95):
    """SVG documents for a coverage report.

    Returns a dict of file stem to SVG text: coverage against sample size
    with one panel per report time (plus the band), and bar charts of mean
    interval width at each report time and of computation time by method.
    """
    methods = sorted({r["method"] for r in rows}, key=_method_order)
    sizes = sorted({r["n"] for r in rows})
    times = sorted({r["time"] for r in rows if r["time"] != "band"})
    out = {}
    for scenario in sorted({r["scenario"] for r in rows}):
        sub = [r for r in rows if r["scenario"] == scenario]
        panels = []
        for t in times + ["band"]:
            series = {}
            for m in methods:
                cells = sorted((r for r in sub if r["method"] == m and r["time"] == t),
                               key=lambda r: r["n"])
                if cells:
                    series[m] = ([c["n"] for c in cells], [c["coverage"] for c in cells])
            title = "band" if t == "band" else f"t = {_label(t)}"
            panels.append((title, series))
        out[f"{scenario}_coverage"] = line_panels(
            panels, methods, "sample size n", "coverage", reference=level,
            title=f"Coverage ({scenario})")
        n_max = max(sizes)
        width_vals = [[_lookup(sub, n_max, m, t, "mean_width") for m in methods] for t in times]
        out[f"{scenario}_width"] = grouped_bars(
            [_label(t) for t in times], methods, width_vals, "mean interval width",
            xlabel="time", title=f"Interval width, n = {n_max} ({scenario})")
        time_vals = [[_lookup(sub, n, m, "band", "elapsed_ms") for m in methods] for n in sizes]
        if any(np.isfinite(v) for g in time_vals for v in g):
            out[f"{scenario}_time"] = grouped_bars(
                sizes, methods, time_vals, "total computation time (ms)",
                xlabel="sample size n", title=f"Computation time ({scenario})")
    return out


def _lookup(rows, n, method, t, key):
    for r in rows:
        if r["n"] == n and r["method"] == method and r["time"] == t:
            v = r.get(key)
            return float("nan") if v is None or v == "" else float(v)
    return float("nan")


def _method_order(m):
    order = ("EBS", "IF", "WBS-normal", "WBS-poisson", "WBS-weird")
    return order.index(m) if m in order else len(order)


def ate_chart(times, values, lower=None, upper=None, title="ATE"):
    """Step plot of an ATE curve with an optional region."""
    panel = _Panel(70, 50, 480, 280, (float(min(times)), float(max(times))),
                   _limits(values, lower, upper))
    body = panel.axes(title, "time", "ATE")

    def step(y):
        pts = []
        for i, (t, v) in enumerate(zip(times, y)):
            if i:
                pts.append(f"{panel.x(t):.2f},{panel.y(y[i - 1]):.2f}")
            pts.append(f"{panel.x(t):.2f},{panel.y(v):.2f}")
        return " ".join(pts)

    if lower is not None:
        for bound in (lower, upper):
            body.append(f'<polyline points="{step(bound)}" fill="none" stroke="{PALETTE[1]}" '
                        'stroke-dasharray="4 3"/>')
    body.append(f'<polyline points="{step(values)}" fill="none" stroke="{PALETTE[0]}" '
                'stroke-width="1.8"/>')
    return _document(620, 390, body)


def _limits(*arrays):
    vals = np.concatenate([np.asarray(a, dtype=float) for a in arrays if a is not None])
    lo, hi = float(vals.min()), float(vals.max())
    pad = 0.05 * (hi - lo or 1.0)
    return lo - pad, hi + pad
