"""Minimal SVG polyline plots with deterministic output."""
from __future__ import annotations

from typing import Sequence

import numpy as np

__all__ = ["polyline_svg", "write_svg"]

_COLORS = ("#1f5fa8", "#c0392b", "#2e8b57", "#8e44ad", "#d35400", "#555555")
W, H = 640, 420
ML, MR, MT, MB = 70, 20, 40, 50


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _ticks(lo: float, hi: float, n: int = 5):
    if hi <= lo:
        hi = lo + 1.0
    return [lo + (hi - lo) * k / (n - 1) for k in range(n)]


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def polyline_svg(series: Sequence[tuple], title: str = "", xlabel: str = "", ylabel: str = "",
                 logy: bool = False) -> str:
    """Render ``[(x, y, label), ...]`` as an SVG document.

    Non-finite points (and nonpositive ones when ``logy``) are dropped.
    """
    clean = []
    for x, y, label in series:
        x, y = np.asarray(x, float).ravel(), np.asarray(y, float).ravel()
        ok = np.isfinite(x) & np.isfinite(y)
        if logy:
            ok &= y > 0
        x, y = x[ok], y[ok]
        if logy:
            y = np.log10(y)
        clean.append((x, y, str(label)))
    xs = np.concatenate([c[0] for c in clean]) if clean else np.zeros(1)
    ys = np.concatenate([c[1] for c in clean]) if clean else np.zeros(1)
    if xs.size == 0:
        xs, ys = np.zeros(1), np.zeros(1)
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(ys.min()), float(ys.max())
    if x1 <= x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 <= y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pw, ph = W - ML - MR, H - MT - MB

    def px(v):
        return ML + (v - x0) / (x1 - x0) * pw

    def py(v):
        return MT + ph - (v - y0) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
           f'viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">',
           f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
           f'<rect x="{ML}" y="{MT}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for t in _ticks(x0, x1):
        out.append(f'<line x1="{_fmt(px(t))}" y1="{MT + ph}" x2="{_fmt(px(t))}" y2="{MT + ph + 4}" stroke="black"/>')
        out.append(f'<text x="{_fmt(px(t))}" y="{MT + ph + 16}" text-anchor="middle">{t:.4g}</text>')
    for t in _ticks(y0, y1):
        lab = f"1e{t:.3g}" if logy else f"{t:.4g}"
        out.append(f'<line x1="{ML - 4}" y1="{_fmt(py(t))}" x2="{ML}" y2="{_fmt(py(t))}" stroke="black"/>')
        out.append(f'<text x="{ML - 6}" y="{_fmt(py(t) + 4)}" text-anchor="end">{lab}</text>')
    if title:
        out.append(f'<text x="{W // 2}" y="22" text-anchor="middle" font-size="14">{_esc(title)}</text>')
    if xlabel:
        out.append(f'<text x="{ML + pw // 2}" y="{H - 12}" text-anchor="middle">{_esc(xlabel)}</text>')
    if ylabel:
        out.append(f'<text x="16" y="{MT + ph // 2}" text-anchor="middle" '
                   f'transform="rotate(-90 16 {MT + ph // 2})">{_esc(ylabel)}</text>')
    for k, (x, y, label) in enumerate(clean):
        color = _COLORS[k % len(_COLORS)]
        pts = " ".join(f"{_fmt(px(a))},{_fmt(py(b))}" for a, b in zip(x, y))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        if label:
            out.append(f'<text x="{ML + pw - 4}" y="{MT + 14 + 14 * k}" text-anchor="end" '
                       f'fill="{color}">{_esc(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_svg(path, series, **kw) -> None:
    with open(path, "w") as fh:
        fh.write(polyline_svg(series, **kw))


