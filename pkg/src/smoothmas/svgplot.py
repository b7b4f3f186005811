"""Minimal self-contained SVG line charts.

Figures are for eyeballing runs, nothing downstream parses them. Everything
is emitted as plain polylines so the files open anywhere without a plotting
stack behind them.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence
from xml.sax.saxutils import escape

NORMAL_COLOR = "#2c7fb8"
MALICIOUS_COLOR = "#d7301f"


@dataclass(frozen=True)
class Series:
    label: str
    points: tuple[tuple[float, float], ...]
    color: str


def agent_series(
    label: str, points: Sequence[tuple[float, float]], malicious: bool
) -> Series:
    color = MALICIOUS_COLOR if malicious else NORMAL_COLOR
    return Series(label, tuple(points), color)


def _bounds(series: Sequence[Series]) -> tuple[float, float, float, float]:
    xs = [x for s in series for x, _ in s.points]
    ys = [y for s in series for _, y in s.points]
    if not xs:
        return 0.0, 1.0, 0.0, 1.0
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pad_x = 0.03 * (x1 - x0)
    pad_y = 0.05 * (y1 - y0)
    return x0 - pad_x, x1 + pad_x, y0 - pad_y, y1 + pad_y


def _ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    step = (hi - lo) / (count - 1)
    return [lo + i * step for i in range(count)]


def render_chart(
    series: Sequence[Series],
    title: str,
    x_label: str,
    y_label: str,
    width: int = 720,
    height: int = 480,
) -> str:
    """One SVG document: axes, ticks, a polyline per series."""
    margin_l, margin_r, margin_t, margin_b = 64, 16, 40, 48
    plot_w = width - margin_l - margin_r
    plot_h = height - margin_t - margin_b
    x0, x1, y0, y1 = _bounds(series)

    def px(x: float) -> float:
        return margin_l + (x - x0) / (x1 - x0) * plot_w

    def py(y: float) -> float:
        return margin_t + (y1 - y) / (y1 - y0) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="24" text-anchor="middle" '
        f'font-family="sans-serif" font-size="16">{escape(title)}</text>',
    ]
    axis = (
        f'<line x1="{margin_l}" y1="{margin_t}" x2="{margin_l}" '
        f'y2="{margin_t + plot_h}" stroke="black"/>'
        f'<line x1="{margin_l}" y1="{margin_t + plot_h}" '
        f'x2="{margin_l + plot_w}" y2="{margin_t + plot_h}" stroke="black"/>'
    )
    parts.append(axis)
    for tx in _ticks(x0, x1):
        parts.append(
            f'<line x1="{px(tx):.1f}" y1="{margin_t + plot_h}" '
            f'x2="{px(tx):.1f}" y2="{margin_t + plot_h + 4}" stroke="black"/>'
            f'<text x="{px(tx):.1f}" y="{margin_t + plot_h + 18}" '
            f'text-anchor="middle" font-family="sans-serif" font-size="11">'
            f"{tx:.4g}</text>"
        )
    for ty in _ticks(y0, y1):
        parts.append(
            f'<line x1="{margin_l - 4}" y1="{py(ty):.1f}" x2="{margin_l}" '
            f'y2="{py(ty):.1f}" stroke="black"/>'
            f'<text x="{margin_l - 8}" y="{py(ty) + 4:.1f}" text-anchor="end" '
            f'font-family="sans-serif" font-size="11">{ty:.4g}</text>'
        )
    parts.append(
        f'<text x="{margin_l + plot_w / 2:.1f}" y="{height - 8}" '
        f'text-anchor="middle" font-family="sans-serif" font-size="13">'
        f"{escape(x_label)}</text>"
        f'<text x="16" y="{margin_t + plot_h / 2:.1f}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="13" '
        f'transform="rotate(-90 16 {margin_t + plot_h / 2:.1f})">'
        f"{escape(y_label)}</text>"
    )
    for s in series:
        coords = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in s.points)
        parts.append(
            f'<polyline fill="none" stroke="{s.color}" stroke-width="1.5" '
            f'opacity="0.85" points="{coords}">'
            f"<title>{escape(s.label)}</title></polyline>"
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def trajectory_chart(
    states: Sequence[Sequence[Sequence[float]]],
    malicious: Iterable[int],
    title: str,
    component: int = 0,
) -> str:
    """Per-agent state trajectories for one component over rounds."""
    bad = set(malicious)
    n = len(states[0])
    series = [
        agent_series(
            f"agent {i}" + (" (malicious)" if i in bad else ""),
            [(r, row[i][component]) for r, row in enumerate(states)],
            i in bad,
        )
        for i in range(n)
    ]
    return render_chart(series, title, "round", f"component_{component}")


def top_view_chart(
    states: Sequence[Sequence[Sequence[float]]],
    malicious: Iterable[int],
    title: str,
    offsets: Optional[Sequence[Sequence[float]]] = None,
) -> str:
    """x-y projection of each agent's path, optionally shifted by a fixed
    per-agent offset (slot positions for formation runs)."""
    bad = set(malicious)
    n = len(states[0])
    series = []
    for i in range(n):
        ox = offsets[i][0] if offsets is not None else 0.0
        oy = offsets[i][1] if offsets is not None else 0.0
        pts = [(row[i][0] + ox, row[i][1] + oy) for row in states]
        series.append(
            agent_series(
                f"agent {i}" + (" (malicious)" if i in bad else ""), pts, i in bad
            )
        )
    return render_chart(series, title, "x", "y")
