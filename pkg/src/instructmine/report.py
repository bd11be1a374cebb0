"""Plot-ready report files: per-indicator regression CSVs and SVGs.

The SVG writer is deliberately hand-rolled: a fixed canvas, fixed float
formatting, no library in the loop, so identical inputs produce
identical bytes.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataError, UsageError
from .indicators import INDICATOR_NAMES
from .stats import Observation, fit_univariate

FORMATS = ("csv", "svg")

CSV_HEADER = "indicator,value,loss,fit,ci_lo,ci_hi"


def _univariate_rows(observations, indicator):
    """Points sorted by indicator value, with the fitted curve and band.

    The regression runs on log-loss; the emitted fit and band are mapped
    back through exp so every column shares the loss scale.
    """
    fit = fit_univariate(observations, indicator)
    pairs = sorted(
        ((getattr(o.indicators, indicator), o.loss) for o in observations),
        key=lambda t: t,
    )
    xs = np.array([p[0] for p in pairs])
    line, lo, hi = fit.band(xs)
    rows = []
    for (x, loss), f, lo_i, hi_i in zip(pairs, line, lo, hi):
        rows.append((x, loss, math.exp(f), math.exp(lo_i), math.exp(hi_i)))
    return rows


def _fmt(value: float) -> str:
    return f"{value:.10g}"


def _svg_scatter(rows: Sequence[tuple], indicator: str) -> str:
    width, height = 640, 420
    ml, mr, mt, mb = 60, 20, 20, 45
    plot_w, plot_h = width - ml - mr, height - mt - mb

    xs = [r[0] for r in rows]
    ys = [r[1] for r in rows] + [r[3] for r in rows] + [r[4] for r in rows]
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = min(ys), max(ys)
    x_pad = (x_hi - x_lo) * 0.05 or 1.0
    y_pad = (y_hi - y_lo) * 0.05 or 1.0
    x_lo, x_hi = x_lo - x_pad, x_hi + x_pad
    y_lo, y_hi = y_lo - y_pad, y_hi + y_pad

    def px(x: float) -> str:
        return f"{ml + (x - x_lo) / (x_hi - x_lo) * plot_w:.2f}"

    def py(y: float) -> str:
        return f"{mt + (y_hi - y) / (y_hi - y_lo) * plot_h:.2f}"

    band = " ".join(f"{px(r[0])},{py(r[4])}" for r in rows)
    band += " " + " ".join(f"{px(r[0])},{py(r[3])}" for r in reversed(rows))
    line = " ".join(f"{px(r[0])},{py(r[2])}" for r in rows)
    points = "".join(
        f'<circle cx="{px(r[0])}" cy="{py(r[1])}" r="3" fill="#40515e" fill-opacity="0.8"/>'
        for r in rows
    )
    x_ticks = []
    y_ticks = []
    for i in range(5):
        xv = x_lo + (x_hi - x_lo) * i / 4
        yv = y_lo + (y_hi - y_lo) * i / 4
        x_ticks.append(
            f'<text x="{px(xv)}" y="{height - mb + 18}" text-anchor="middle" '
            f'font-size="11">{xv:.4g}</text>'
        )
        y_ticks.append(
            f'<text x="{ml - 8}" y="{py(yv)}" text-anchor="end" '
            f'dominant-baseline="middle" font-size="11">{yv:.4g}</text>'
        )
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">'
        f'<rect width="{width}" height="{height}" fill="white"/>'
        f'<rect x="{ml}" y="{mt}" width="{plot_w}" height="{plot_h}" fill="none" '
        f'stroke="#888" stroke-width="1"/>'
        f'<polygon points="{band}" fill="#8ab6dd" fill-opacity="0.35" stroke="none"/>'
        f'<polyline points="{line}" fill="none" stroke="#1f6cae" stroke-width="2"/>'
        f"{points}"
        f"{''.join(x_ticks)}{''.join(y_ticks)}"
        f'<text x="{ml + plot_w / 2:.2f}" y="{height - 8}" text-anchor="middle" '
        f'font-size="13">{indicator}</text>'
        f'<text x="14" y="{mt + plot_h / 2:.2f}" text-anchor="middle" font-size="13" '
        f'transform="rotate(-90 14 {mt + plot_h / 2:.2f})">loss</text>'
        "</svg>\n"
    )


def histogram_data(values: Sequence[float], bins: int = 10) -> dict:
    arr = np.asarray(values, dtype=float)
    if arr.min() == arr.max():
        return {"edges": [float(arr.min()), float(arr.max())], "counts": [int(arr.size)]}
    counts, edges = np.histogram(arr, bins=bins)
    return {"edges": [float(e) for e in edges], "counts": [int(c) for c in counts]}


def write_univariate_report(
    observations: Sequence[Observation],
    out_dir: str | Path,
    formats: Sequence[str] = FORMATS,
    indicators: Sequence[str] = INDICATOR_NAMES,
) -> list[Path]:
    """One CSV and one SVG per indicator, plus pooled histogram data.

    Validates everything before touching the filesystem so a failure
    leaves no partial report behind.
    """
    unknown = [f for f in formats if f not in FORMATS]
    if unknown:
        raise UsageError(f"unknown report formats {unknown}, expected {FORMATS}")
    if not observations:
        raise DataError("no observations to report")

    per_indicator = {name: _univariate_rows(observations, name) for name in indicators}
    histograms = {"loss": histogram_data([o.loss for o in observations])}
    for name in indicators:
        histograms[name] = histogram_data(
            [getattr(o.indicators, name) for o in observations]
        )

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name in indicators:
        rows = per_indicator[name]
        if "csv" in formats:
            path = out_dir / f"univariate_{name}.csv"
            lines = [CSV_HEADER]
            lines += [
                ",".join([name] + [_fmt(v) for v in row]) for row in rows
            ]
            path.write_text("\n".join(lines) + "\n", encoding="utf-8")
            written.append(path)
        if "svg" in formats:
            path = out_dir / f"univariate_{name}.svg"
            path.write_text(_svg_scatter(rows, name), encoding="utf-8")
            written.append(path)
    hist_path = out_dir / "histograms.json"
    hist_path.write_text(
        json.dumps(histograms, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    written.append(hist_path)
    return written
