"""Deterministic SVG figure emitters and the pinned quantile rule.

Figures are plain hand-built SVG strings (no plotting dependency): given
identical inputs the emitted bytes are identical.  Quartiles follow the
Hazen rule, i.e. linear interpolation between closest ranks at positions
n*q + 0.5, which makes the quartiles of {1,2,3,4} equal 1.5 / 2.5 / 3.5.
"""

from __future__ import annotations

from dataclasses import dataclass
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ["#d62728", "#2ca02c", "#1f77b4", "#9467bd", "#17becf", "#8c564b",
           "#e377c2", "#7f7f7f"]

_W, _H = 720, 480
_ML, _MR, _MT, _MB = 72, 24, 44, 56


def quantile(values, q: float) -> float:
    """Hazen quantile: rank position n*q + 0.5, linearly interpolated."""
    x = np.sort(np.asarray(values, dtype=np.float64).ravel())
    n = x.size
    if n == 0:
        raise ValueError("quantile of empty data")
    h = n * q + 0.5
    h = min(max(h, 1.0), float(n))
    lo = int(np.floor(h))
    frac = h - lo
    if lo >= n:
        return float(x[-1])
    return float(x[lo - 1] + frac * (x[lo] - x[lo - 1]))


def quartiles(values) -> tuple:
    return (quantile(values, 0.25), quantile(values, 0.50),
            quantile(values, 0.75))


@dataclass
class Curve:
    label: str
    xs: np.ndarray
    ys: np.ndarray
    band: tuple | None = None  # (lo_ys, hi_ys) envelope


def _f(v: float) -> str:
    return f"{v:.2f}"


class _Canvas:
    def __init__(self, x_min, x_max, y_min, y_max):
        if x_max <= x_min:
            x_max = x_min + 1.0
        if y_max <= y_min:
            y_max = y_min + 1.0
        pad = 0.05 * (y_max - y_min)
        self.x_min, self.x_max = x_min, x_max
        self.y_min, self.y_max = y_min - pad, y_max + pad
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" '
            f'height="{_H}" viewBox="0 0 {_W} {_H}">',
            f'<rect x="0" y="0" width="{_W}" height="{_H}" fill="white"/>']

    def px(self, x):
        span = self.x_max - self.x_min
        return _ML + (x - self.x_min) / span * (_W - _ML - _MR)

    def py(self, y):
        span = self.y_max - self.y_min
        return _H - _MB - (y - self.y_min) / span * (_H - _MT - _MB)

    def axes(self, x_label, y_label, x_ticks, y_ticks):
        p = self.parts
        p.append(f'<line x1="{_ML}" y1="{_H - _MB}" x2="{_W - _MR}" '
                 f'y2="{_H - _MB}" stroke="black"/>')
        p.append(f'<line x1="{_ML}" y1="{_MT}" x2="{_ML}" y2="{_H - _MB}" '
                 f'stroke="black"/>')
        for t in x_ticks:
            x = self.px(t)
            p.append(f'<line x1="{_f(x)}" y1="{_H - _MB}" x2="{_f(x)}" '
                     f'y2="{_H - _MB + 5}" stroke="black"/>')
            p.append(f'<text x="{_f(x)}" y="{_H - _MB + 20}" font-size="12" '
                     f'text-anchor="middle">{_f(t).rstrip("0").rstrip(".")}</text>')
        for t in y_ticks:
            y = self.py(t)
            p.append(f'<line x1="{_ML - 5}" y1="{_f(y)}" x2="{_ML}" '
                     f'y2="{_f(y)}" stroke="black"/>')
            p.append(f'<text x="{_ML - 8}" y="{_f(y + 4)}" font-size="12" '
                     f'text-anchor="end">{t:.3g}</text>')
        p.append(f'<text x="{(_ML + _W - _MR) / 2}" y="{_H - 14}" '
                 f'font-size="13" text-anchor="middle">{escape(x_label)}</text>')
        p.append(f'<text x="18" y="{(_MT + _H - _MB) / 2}" font-size="13" '
                 f'text-anchor="middle" transform="rotate(-90 18 '
                 f'{(_MT + _H - _MB) / 2})">{escape(y_label)}</text>')

    def title(self, text):
        self.parts.append(f'<text x="{_W / 2}" y="24" font-size="15" '
                          f'text-anchor="middle">{escape(text)}</text>')

    def legend(self, labels_colors):
        x0 = _W - _MR - 220
        for i, (label, color) in enumerate(labels_colors):
            y = _MT + 14 + 18 * i
            self.parts.append(f'<line x1="{x0}" y1="{y - 4}" x2="{x0 + 24}" '
                              f'y2="{y - 4}" stroke="{color}" stroke-width="2"/>')
            self.parts.append(f'<text x="{x0 + 30}" y="{y}" font-size="12">'
                              f'{escape(label)}</text>')

    def render(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def _ticks(lo, hi, n=5):
    return list(np.linspace(lo, hi, n))


def svg_curves(curves: list[Curve], title: str = "",
               x_label: str = "epoch", y_label: str = "reward") -> str:
    """Learning-curve overlay; one polyline per curve plus optional band."""
    if not curves:
        raise ValueError("no curves to draw")
    x_max = max(float(np.max(c.xs)) for c in curves)
    all_y = []
    for c in curves:
        all_y.append(np.asarray(c.ys, dtype=np.float64))
        if c.band is not None:
            all_y.extend([np.asarray(c.band[0]), np.asarray(c.band[1])])
    y_cat = np.concatenate([y.ravel() for y in all_y])
    cv = _Canvas(0.0, x_max, float(np.min(y_cat)), float(np.max(y_cat)))
    cv.axes(x_label, y_label, _ticks(0.0, x_max), _ticks(cv.y_min, cv.y_max))
    if title:
        cv.title(title)
    legend = []
    for i, c in enumerate(curves):
        color = PALETTE[i % len(PALETTE)]
        legend.append((c.label, color))
        if c.band is not None:
            lo, hi = c.band
            pts = [f"{_f(cv.px(x))},{_f(cv.py(y))}" for x, y in zip(c.xs, hi)]
            pts += [f"{_f(cv.px(x))},{_f(cv.py(y))}"
                    for x, y in zip(c.xs[::-1], np.asarray(lo)[::-1])]
            cv.parts.append(f'<polygon points="{" ".join(pts)}" fill="{color}" '
                            f'fill-opacity="0.15" stroke="none"/>')
        pts = " ".join(f"{_f(cv.px(x))},{_f(cv.py(y))}"
                       for x, y in zip(c.xs, c.ys))
        cv.parts.append(f'<polyline points="{pts}" fill="none" '
                        f'stroke="{color}" stroke-width="1.5"/>')
    cv.legend(legend)
    return cv.render()


def svg_box(groups: list[tuple], title: str = "",
            y_label: str = "inference reward") -> str:
    """Quartile box plot per labeled group; whiskers span min..max."""
    if not groups:
        raise ValueError("no groups to draw")
    all_vals = np.concatenate([np.asarray(v, dtype=np.float64).ravel()
                               for _, v in groups])
    cv = _Canvas(0.0, float(len(groups)), float(np.min(all_vals)),
                 float(np.max(all_vals)))
    cv.axes("", y_label, [], _ticks(cv.y_min, cv.y_max))
    if title:
        cv.title(title)
    width = 0.3
    for i, (label, values) in enumerate(groups):
        vals = np.asarray(values, dtype=np.float64).ravel()
        q1, med, q3 = quartiles(vals)
        lo, hi = float(np.min(vals)), float(np.max(vals))
        xc = i + 0.5
        color = PALETTE[i % len(PALETTE)]
        x0, x1 = cv.px(xc - width), cv.px(xc + width)
        cv.parts.append(
            f'<line x1="{_f(cv.px(xc))}" y1="{_f(cv.py(lo))}" '
            f'x2="{_f(cv.px(xc))}" y2="{_f(cv.py(hi))}" stroke="{color}"/>')
        for whisker in (lo, hi):
            cv.parts.append(
                f'<line x1="{_f(cv.px(xc - width / 2))}" y1="{_f(cv.py(whisker))}" '
                f'x2="{_f(cv.px(xc + width / 2))}" y2="{_f(cv.py(whisker))}" '
                f'stroke="{color}"/>')
        cv.parts.append(
            f'<rect x="{_f(x0)}" y="{_f(cv.py(q3))}" width="{_f(x1 - x0)}" '
            f'height="{_f(cv.py(q1) - cv.py(q3))}" fill="{color}" '
            f'fill-opacity="0.25" stroke="{color}"/>')
        cv.parts.append(
            f'<line x1="{_f(x0)}" y1="{_f(cv.py(med))}" x2="{_f(x1)}" '
            f'y2="{_f(cv.py(med))}" stroke="{color}" stroke-width="2"/>')
        cv.parts.append(
            f'<text x="{_f(cv.px(xc))}" y="{_H - _MB + 20}" font-size="12" '
            f'text-anchor="middle">{escape(str(label))}</text>')
    return cv.render()


def latency_markdown(rows: list[dict]) -> str:
    """Markdown table of per-iteration seconds per variant."""
    lines = ["| variant | mean s/iter | std s/iter | iterations |",
             "|---|---|---|---|"]
    for r in rows:
        lines.append(f"| {r['variant']} | {r['mean_seconds']:.5f} "
                     f"| {r['std_seconds']:.5f} | {r['iterations']} |")
    return "\n".join(lines) + "\n"


def save_text(path, text: str):
    with open(path, "w", newline="\n") as fh:
        fh.write(text)
