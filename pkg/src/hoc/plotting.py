"""Self-contained SVG learning-curve plots.

The file is written directly (no plotting library) so output is
byte-deterministic for a fixed summary: mean line plus a shaded one-standard-
deviation band per agent, axes with round tick values, and a legend.  Numbers
are formatted with a fixed precision; the backing data always travels in the
adjacent aggregate CSV.
"""

from __future__ import annotations

import math
import os
import tempfile
from pathlib import Path

from .experiment import RunSummary

_WIDTH, _HEIGHT = 720.0, 440.0
_MARGIN_L, _MARGIN_R, _MARGIN_T, _MARGIN_B = 72.0, 24.0, 40.0, 56.0
_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")

_METRIC_LABEL = {
    "steps": "steps per episode (window mean)",
    "reward": "reward per episode (window mean)",
}


class EmptySummaryError(ValueError):
    """Nothing to plot: the summary has zero checkpoints."""


def _fmt(x: float) -> str:
    return f"{x:.2f}".rstrip("0").rstrip(".")


def _nice_ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 2.5, 5.0, 10.0):
        if raw <= mult * mag:
            step = mult * mag
            break
    else:
        step = 10.0 * mag
    first = math.ceil(lo / step) * step
    ticks = []
    t = first
    while t <= hi + 1e-9 * step:
        ticks.append(round(t, 10))
        t += step
    return ticks


def emit_plot(summaries: list[RunSummary], path) -> None:
    """Write a learning-curve SVG (one series per summary) atomically."""
    if not summaries or any(len(s.mean) == 0 for s in summaries):
        raise EmptySummaryError("summary has no checkpoints")
    xs_all = [float(x) for s in summaries for x in s.episodes_at_checkpoint]
    lo_y = min(float((s.mean - s.std).min()) for s in summaries)
    hi_y = max(float((s.mean + s.std).max()) for s in summaries)
    if hi_y == lo_y:
        hi_y = lo_y + 1.0
    pad = 0.05 * (hi_y - lo_y)
    lo_y -= pad
    hi_y += pad
    lo_x, hi_x = min(xs_all), max(xs_all)
    if hi_x == lo_x:
        lo_x -= 1.0
        hi_x += 1.0

    plot_w = _WIDTH - _MARGIN_L - _MARGIN_R
    plot_h = _HEIGHT - _MARGIN_T - _MARGIN_B

    def sx(x: float) -> float:
        return _MARGIN_L + (x - lo_x) / (hi_x - lo_x) * plot_w

    def sy(y: float) -> float:
        return _MARGIN_T + (hi_y - y) / (hi_y - lo_y) * plot_h

    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_fmt(_WIDTH)}" '
        f'height="{_fmt(_HEIGHT)}" viewBox="0 0 {_fmt(_WIDTH)} {_fmt(_HEIGHT)}">',
        f'<rect width="{_fmt(_WIDTH)}" height="{_fmt(_HEIGHT)}" fill="white"/>',
    ]
    # axes frame
    x0, y0 = _MARGIN_L, _MARGIN_T + plot_h
    parts.append(
        f'<line x1="{_fmt(x0)}" y1="{_fmt(y0)}" x2="{_fmt(x0 + plot_w)}" '
        f'y2="{_fmt(y0)}" stroke="black" stroke-width="1"/>'
    )
    parts.append(
        f'<line x1="{_fmt(x0)}" y1="{_fmt(y0)}" x2="{_fmt(x0)}" '
        f'y2="{_fmt(_MARGIN_T)}" stroke="black" stroke-width="1"/>'
    )
    for t in _nice_ticks(lo_x, hi_x):
        parts.append(
            f'<line x1="{_fmt(sx(t))}" y1="{_fmt(y0)}" x2="{_fmt(sx(t))}" '
            f'y2="{_fmt(y0 + 5)}" stroke="black" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{_fmt(sx(t))}" y="{_fmt(y0 + 20)}" font-size="12" '
            f'font-family="sans-serif" text-anchor="middle">{_fmt(t)}</text>'
        )
    for t in _nice_ticks(lo_y, hi_y):
        parts.append(
            f'<line x1="{_fmt(x0 - 5)}" y1="{_fmt(sy(t))}" x2="{_fmt(x0)}" '
            f'y2="{_fmt(sy(t))}" stroke="black" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{_fmt(x0 - 9)}" y="{_fmt(sy(t) + 4)}" font-size="12" '
            f'font-family="sans-serif" text-anchor="end">{_fmt(t)}</text>'
        )
    parts.append(
        f'<text x="{_fmt(x0 + plot_w / 2)}" y="{_fmt(_HEIGHT - 14)}" '
        f'font-size="13" font-family="sans-serif" '
        f'text-anchor="middle">episodes</text>'
    )
    ylabel = _METRIC_LABEL.get(summaries[0].metric, summaries[0].metric)
    parts.append(
        f'<text x="18" y="{_fmt(_MARGIN_T + plot_h / 2)}" font-size="13" '
        f'font-family="sans-serif" text-anchor="middle" '
        f'transform="rotate(-90 18 {_fmt(_MARGIN_T + plot_h / 2)})">'
        f"{ylabel}</text>"
    )

    for i, s in enumerate(summaries):
        color = _PALETTE[i % len(_PALETTE)]
        xs = [sx(float(x)) for x in s.episodes_at_checkpoint]
        mids = [sy(float(m)) for m in s.mean]
        if len(xs) >= 2:
            upper = [sy(float(m + d)) for m, d in zip(s.mean, s.std)]
            lower = [sy(float(m - d)) for m, d in zip(s.mean, s.std)]
            band = " ".join(
                f"{_fmt(x)},{_fmt(y)}" for x, y in zip(xs, upper)
            ) + " " + " ".join(
                f"{_fmt(x)},{_fmt(y)}"
                for x, y in zip(reversed(xs), reversed(lower))
            )
            parts.append(
                f'<polygon points="{band}" fill="{color}" fill-opacity="0.15" '
                f'stroke="none"/>'
            )
            line = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in zip(xs, mids))
            parts.append(
                f'<polyline points="{line}" fill="none" stroke="{color}" '
                f'stroke-width="1.8"/>'
            )
        else:
            # Degenerate one-checkpoint series: a marker, no band.
            parts.append(
                f'<circle cx="{_fmt(xs[0])}" cy="{_fmt(mids[0])}" r="4" '
                f'fill="{color}"/>'
            )

    # legend, top-right inside the frame
    for i, s in enumerate(summaries):
        color = _PALETTE[i % len(_PALETTE)]
        ly = _MARGIN_T + 16 + 18 * i
        lx = _MARGIN_L + plot_w - 170
        parts.append(
            f'<rect x="{_fmt(lx)}" y="{_fmt(ly - 9)}" width="14" height="10" '
            f'fill="{color}"/>'
        )
        parts.append(
            f'<text x="{_fmt(lx + 20)}" y="{_fmt(ly)}" font-size="12" '
            f'font-family="sans-serif">{s.label}</text>'
        )
    parts.append("</svg>")
    data = "\n".join(parts) + "\n"

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise
