"""Dependency-free SVG scatter plots of selection probabilities.

Each point is an element placed by two qualifications; its fill opacity is
the element's probability of a positive outcome.  Output is byte-stable for
identical inputs.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

TASK_COLORS = ("#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e")

_SIZE = 360
_MARGIN = 40


def scatter_svg(
    x: np.ndarray,
    y: np.ndarray,
    probs: np.ndarray,
    title: str,
    x_label: str,
    y_label: str,
    color: str = TASK_COLORS[0],
) -> str:
    span = _SIZE - 2 * _MARGIN

    def px(v: float) -> float:
        return _MARGIN + span * float(v)

    def py(v: float) -> float:
        return _SIZE - _MARGIN - span * float(v)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_SIZE}" height="{_SIZE}" '
        f'viewBox="0 0 {_SIZE} {_SIZE}" font-family="sans-serif" font-size="11">',
        f'<rect x="{_MARGIN}" y="{_MARGIN}" width="{span}" height="{span}" fill="none" stroke="#444"/>',
        f'<text x="{_SIZE / 2:.1f}" y="{_MARGIN / 2 + 4:.1f}" text-anchor="middle" font-size="12">{_escape(title)}</text>',
        f'<text x="{_SIZE / 2:.1f}" y="{_SIZE - 8}" text-anchor="middle">{_escape(x_label)}</text>',
        f'<text x="12" y="{_SIZE / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 12 {_SIZE / 2:.1f})">{_escape(y_label)}</text>',
    ]
    for tick in (0.0, 0.5, 1.0):
        parts.append(f'<text x="{px(tick):.1f}" y="{_SIZE - _MARGIN + 14}" text-anchor="middle">{tick:g}</text>')
        parts.append(f'<text x="{_MARGIN - 6}" y="{py(tick) + 4:.1f}" text-anchor="end">{tick:g}</text>')
    for xi, yi, p in zip(x, y, probs):
        parts.append(
            f'<circle cx="{px(xi):.2f}" cy="{py(yi):.2f}" r="4" fill="{color}" '
            f'fill-opacity="{float(p):.4f}" stroke="{color}" stroke-opacity="0.35"/>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _escape(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def write_scatter(path: str | Path, *args, **kwargs) -> Path:
    path = Path(path)
    path.write_text(scatter_svg(*args, **kwargs), encoding="utf-8")
    return path
