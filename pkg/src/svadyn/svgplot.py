"""Deterministic SVG emitter for condition-accuracy trajectory charts.

Hand-rolled rather than delegated to a plotting library so that
identical inputs always produce byte-identical SVG (the pipeline hashes
its artifacts). One polyline per condition, translucent CI bands, the
aggregate as a black polyline, steps on a log axis (log10(step + 1), so
step 0 plots) with a linear fallback.
"""

from __future__ import annotations

import math
from typing import Sequence
from xml.sax.saxutils import escape

from .analysis import TrajectorySeries

WIDTH, HEIGHT = 760, 460
MARGIN_LEFT, MARGIN_RIGHT, MARGIN_TOP, MARGIN_BOTTOM = 56, 150, 36, 44

CONDITION_COLORS = {
    "S": "#1f77b4",
    "P": "#d62728",
    "SS": "#2ca02c",
    "SP": "#ff7f0e",
    "PS": "#9467bd",
    "PP": "#8c564b",
    "pooled": "#7f7f7f",
}
FALLBACK_COLOR = "#17becf"


def _fmt(value: float) -> str:
    return f"{value:.2f}"


def emit_plot(
    series: Sequence[TrajectorySeries],
    aggregate: TrajectorySeries | None = None,
    *,
    title: str = "",
    log_x: bool = True,
) -> str:
    """Render condition series (+ optional aggregate) to an SVG document.

    All series must share the step axis range; a single-point series is
    drawn as a marker instead of a polyline.
    """
    if not series:
        raise ValueError("no series to plot")

    all_steps = sorted({s for ts in series for s in ts.steps})
    if aggregate is not None:
        all_steps = sorted(set(all_steps) | set(aggregate.steps))

    def xpos(step: int) -> float:
        value = math.log10(step + 1) if log_x else float(step)
        lo = math.log10(all_steps[0] + 1) if log_x else float(all_steps[0])
        hi = math.log10(all_steps[-1] + 1) if log_x else float(all_steps[-1])
        if hi == lo:
            frac = 0.5
        else:
            frac = (value - lo) / (hi - lo)
        return MARGIN_LEFT + frac * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)

    def ypos(accuracy: float) -> float:
        return MARGIN_TOP + (1.0 - accuracy) * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)

    parts: list[str] = []
    parts.append(
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">'
    )
    parts.append(f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>')
    if title:
        parts.append(
            f'<text x="{MARGIN_LEFT}" y="22" font-family="sans-serif" font-size="14">{escape(title)}</text>'
        )

    # axes
    x0, x1 = MARGIN_LEFT, WIDTH - MARGIN_RIGHT
    y0, y1 = HEIGHT - MARGIN_BOTTOM, MARGIN_TOP
    parts.append(f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="#333333"/>')
    parts.append(f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="#333333"/>')
    for tick in (0.0, 0.25, 0.5, 0.75, 1.0):
        y = ypos(tick)
        parts.append(f'<line x1="{x0 - 4}" y1="{_fmt(y)}" x2="{x0}" y2="{_fmt(y)}" stroke="#333333"/>')
        parts.append(
            f'<text x="{x0 - 8}" y="{_fmt(y + 4)}" text-anchor="end" font-family="sans-serif" '
            f'font-size="11">{tick:g}</text>'
        )
    tick_steps = all_steps if len(all_steps) <= 8 else [all_steps[i] for i in
                  sorted({round(j * (len(all_steps) - 1) / 7) for j in range(8)})]
    for step in tick_steps:
        x = xpos(step)
        parts.append(f'<line x1="{_fmt(x)}" y1="{y0}" x2="{_fmt(x)}" y2="{y0 + 4}" stroke="#333333"/>')
        parts.append(
            f'<text x="{_fmt(x)}" y="{y0 + 16}" text-anchor="middle" font-family="sans-serif" '
            f'font-size="11">{step}</text>'
        )
    parts.append(
        f'<text x="{(x0 + x1) // 2}" y="{HEIGHT - 8}" text-anchor="middle" font-family="sans-serif" '
        f'font-size="12">training step{" (log scale)" if log_x else ""}</text>'
    )

    # CI bands first so lines draw on top
    for ts in series:
        color = CONDITION_COLORS.get(ts.condition, FALLBACK_COLOR)
        forward = [f"{_fmt(xpos(p.step))},{_fmt(ypos(p.cell.ci_low))}" for p in ts.points]
        backward = [f"{_fmt(xpos(p.step))},{_fmt(ypos(p.cell.ci_high))}" for p in reversed(ts.points)]
        d = "M " + " L ".join(forward) + " L " + " L ".join(backward) + " Z"
        parts.append(f'<path class="ci-band" d="{d}" fill="{color}" fill-opacity="0.18" stroke="none"/>')

    def draw_line(ts: TrajectorySeries, color: str, width: str, css: str) -> None:
        coords = [(xpos(p.step), ypos(p.cell.accuracy)) for p in ts.points]
        if len(coords) == 1:
            x, y = coords[0]
            parts.append(
                f'<circle class="marker" cx="{_fmt(x)}" cy="{_fmt(y)}" r="3.5" fill="{color}"/>'
            )
            return
        points = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in coords)
        parts.append(
            f'<polyline class="{css}" points="{points}" fill="none" stroke="{color}" stroke-width="{width}"/>'
        )

    for ts in series:
        draw_line(ts, CONDITION_COLORS.get(ts.condition, FALLBACK_COLOR), "1.5", "series")
    if aggregate is not None:
        draw_line(aggregate, "#000000", "2.5", "aggregate")

    # legend
    legend_x = WIDTH - MARGIN_RIGHT + 12
    legend_y = MARGIN_TOP + 6
    entries = [(ts.condition, CONDITION_COLORS.get(ts.condition, FALLBACK_COLOR)) for ts in series]
    if aggregate is not None:
        entries.append((aggregate.condition, "#000000"))
    for i, (label, color) in enumerate(entries):
        y = legend_y + i * 18
        parts.append(f'<line x1="{legend_x}" y1="{y}" x2="{legend_x + 22}" y2="{y}" stroke="{color}" stroke-width="2.5"/>')
        parts.append(
            f'<text x="{legend_x + 28}" y="{y + 4}" font-family="sans-serif" font-size="12">{escape(label)}</text>'
        )

    parts.append("</svg>")
    return "\n".join(parts) + "\n"
