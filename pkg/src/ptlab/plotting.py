"""Deterministic SVG line plots of CSV series on a logarithmic time axis."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

WIDTH, HEIGHT = 800, 500
MARGIN = dict(left=70, right=20, top=30, bottom=50)
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


@dataclass(frozen=True)
class PlotSpec:
    x: str = "T"
    y: tuple = ("mean",)
    guides: tuple = ()  # (label, value) pairs
    title: str = ""
    log_x: bool = True


def _num(v: float) -> str:
    return format(float(v), ".9g")


def read_columns(path) -> dict[str, list[float]]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        cols: dict[str, list[float]] = {name: [] for name in reader.fieldnames or []}
        for row in reader:
            for k, v in row.items():
                cols[k].append(float(v))
    return cols


def render_svg(cols: dict, spec: PlotSpec) -> str:
    for name in (spec.x, *spec.y):
        if name not in cols:
            raise ValueError(f"CSV is missing column {name!r}")
    xs_all = cols[spec.x]
    keep = [i for i, x in enumerate(xs_all) if not spec.log_x or x > 0]
    if not keep:
        raise ValueError("no plottable points")
    tx = (lambda v: math.log10(v)) if spec.log_x else (lambda v: v)
    xs = [tx(xs_all[i]) for i in keep]
    ys_all = [cols[name][i] for name in spec.y for i in keep] + [v for _, v in spec.guides]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys_all), max(ys_all)
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def px(v):
        return MARGIN["left"] + (v - x0) / (x1 - x0) * pw

    def py(v):
        return MARGIN["top"] + (y1 - v) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<rect x="{MARGIN["left"]}" y="{MARGIN["top"]}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    if spec.title:
        out.append(f'<text x="{WIDTH // 2}" y="20" text-anchor="middle" font-size="14">{spec.title}</text>')
    xlabel = f"log10 {spec.x}" if spec.log_x else spec.x
    out.append(f'<text x="{MARGIN["left"] + pw // 2}" y="{HEIGHT - 12}" text-anchor="middle" font-size="12">{xlabel}</text>')
    for frac in (0.0, 0.5, 1.0):
        xv = x0 + frac * (x1 - x0)
        yv = y0 + frac * (y1 - y0)
        out.append(f'<text x="{_num(px(xv))}" y="{HEIGHT - MARGIN["bottom"] + 16}" text-anchor="middle" font-size="11">{_num(round(xv, 3))}</text>')
        out.append(f'<text x="{MARGIN["left"] - 6}" y="{_num(py(yv))}" text-anchor="end" font-size="11">{_num(round(yv, 3))}</text>')
    for label, value in spec.guides:
        y = _num(py(value))
        out.append(f'<line class="guide" x1="{MARGIN["left"]}" y1="{y}" x2="{MARGIN["left"] + pw}" y2="{y}" stroke="gray" stroke-dasharray="6,4"/>')
        out.append(f'<text x="{MARGIN["left"] + pw - 4}" y="{_num(py(value) - 4)}" text-anchor="end" font-size="11" fill="gray">{label}</text>')
    for k, name in enumerate(spec.y):
        pts = " ".join(f"{_num(px(x))},{_num(py(cols[name][i]))}" for x, i in zip(xs, keep))
        color = COLORS[k % len(COLORS)]
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        out.append(f'<text x="{MARGIN["left"] + 8}" y="{MARGIN["top"] + 16 + 14 * k}" font-size="11" fill="{color}">{name}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_plot(csv_path, spec: PlotSpec, out_path) -> str:
    svg = render_svg(read_columns(csv_path), spec)
    with open(out_path, "w", newline="\n") as fh:
        fh.write(svg)
    return svg
