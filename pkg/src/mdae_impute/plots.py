"""Standalone SVG bar charts (mean with sd whiskers). Output is a pure function of the inputs."""

from __future__ import annotations

import math
from typing import Sequence
from xml.sax.saxutils import escape

PALETTE = (
    "#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3",
    "#937860", "#da8bc3", "#8c8c8c", "#ccb974", "#64b5cd",
)


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def grouped_bar_svg(
    groups: Sequence[str],
    series: Sequence[str],
    means: Sequence[Sequence[float]],
    sds: Sequence[Sequence[float]] | None = None,
    title: str = "",
    ylabel: str = "RMSE",
    bar_width: float = 14.0,
    height: float = 320.0,
) -> str:
    """Bars for ``means[g][s]`` grouped by ``groups``, one colour per series.

    NaN entries are left blank.
    """
    n_g, n_s = len(groups), len(series)
    gap = bar_width * 1.5
    left, right, top, bottom = 60.0, 150.0, 40.0, 60.0
    plot_w = n_g * (n_s * bar_width + gap)
    width = left + plot_w + right
    plot_h = height - top - bottom
    vals = [
        m + (sds[g][s] if sds is not None and math.isfinite(sds[g][s]) else 0.0)
        for g, row in enumerate(means) for s, m in enumerate(row) if math.isfinite(m)
    ]
    ymax = max(vals, default=1.0) * 1.1 or 1.0

    def y(v):
        return top + plot_h * (1 - v / ymax)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_fmt(width)}" height="{_fmt(height)}" '
        f'viewBox="0 0 {_fmt(width)} {_fmt(height)}" font-family="sans-serif" font-size="11">',
        f'<text x="{_fmt(width / 2)}" y="20" text-anchor="middle" font-size="13">{escape(title)}</text>',
        f'<line x1="{_fmt(left)}" y1="{_fmt(top)}" x2="{_fmt(left)}" y2="{_fmt(top + plot_h)}" stroke="black"/>',
        f'<line x1="{_fmt(left)}" y1="{_fmt(top + plot_h)}" x2="{_fmt(left + plot_w)}" '
        f'y2="{_fmt(top + plot_h)}" stroke="black"/>',
        f'<text x="15" y="{_fmt(top + plot_h / 2)}" transform="rotate(-90 15 {_fmt(top + plot_h / 2)})" '
        f'text-anchor="middle">{escape(ylabel)}</text>',
    ]
    for t in range(6):
        v = ymax * t / 5
        out.append(
            f'<text x="{_fmt(left - 5)}" y="{_fmt(y(v) + 4)}" text-anchor="end">{v:.3g}</text>'
            f'<line x1="{_fmt(left - 3)}" y1="{_fmt(y(v))}" x2="{_fmt(left)}" y2="{_fmt(y(v))}" stroke="black"/>'
        )
    for g, name in enumerate(groups):
        x0 = left + gap / 2 + g * (n_s * bar_width + gap)
        for s in range(n_s):
            m = means[g][s]
            if not math.isfinite(m):
                continue
            x = x0 + s * bar_width
            color = PALETTE[s % len(PALETTE)]
            out.append(
                f'<rect x="{_fmt(x)}" y="{_fmt(y(m))}" width="{_fmt(bar_width - 1)}" '
                f'height="{_fmt(max(top + plot_h - y(m), 0.0))}" fill="{color}"/>'
            )
            sd = sds[g][s] if sds is not None else math.nan
            if math.isfinite(sd) and sd > 0:
                cx = x + (bar_width - 1) / 2
                out.append(
                    f'<line x1="{_fmt(cx)}" y1="{_fmt(y(m + sd))}" x2="{_fmt(cx)}" '
                    f'y2="{_fmt(y(max(m - sd, 0.0)))}" stroke="black"/>'
                )
        cx = x0 + n_s * bar_width / 2
        out.append(f'<text x="{_fmt(cx)}" y="{_fmt(top + plot_h + 16)}" text-anchor="middle">{escape(name)}</text>')
    for s, name in enumerate(series):
        ly = top + 14 * s
        lx = left + plot_w + 15
        out.append(
            f'<rect x="{_fmt(lx)}" y="{_fmt(ly)}" width="10" height="10" fill="{PALETTE[s % len(PALETTE)]}"/>'
            f'<text x="{_fmt(lx + 15)}" y="{_fmt(ly + 9)}">{escape(name)}</text>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def rmse_chart(table, mechanism: str, proportion: float) -> str:
    """Per-dataset mean RMSE of every method, as in a method-comparison figure."""
    means, sds = [], []
    for d in table.datasets:
        row = [table.summary(d, mechanism, proportion, m) for m in table.methods]
        means.append([r[0] for r in row])
        sds.append([r[1] for r in row])
    title = f"Mean RMSE, B draws of {proportion:.0%} {mechanism.upper()}"
    return grouped_bar_svg(table.datasets, table.methods, means, sds, title=title)


def mdb_chart(entry) -> str:
    """One bar per method: its mean distance to the best."""
    means = [[v for v in entry.mdb]]
    title = f"MDB, {entry.proportion:.0%} {entry.mechanism.upper()}"
    return grouped_bar_svg([""], entry.methods, means, None, title=title, ylabel="MDB", bar_width=24.0)
