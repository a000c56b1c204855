"""Per-site series, CSV tables and line charts of metric points.

The SVG writer builds the markup directly so that output is byte-stable
across machines and library versions. A matplotlib PNG can be rendered
alongside for slide decks; that path needs the optional ``plot`` extra.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence
from xml.sax.saxutils import escape, quoteattr

from .domain import MetricPoint
from .errors import EmptyChart, MixedMetrics

CSV_HEADER = ("site", "metric", "nodes", "value", "sample_count")

PALETTE = (
    "#1f77b4",
    "#d62728",
    "#2ca02c",
    "#ff7f0e",
    "#9467bd",
    "#8c564b",
    "#e377c2",
    "#17becf",
)

METRIC_TITLES = {
    "speedup_ratio": "Speedup Ratio",
    "speedup": "Speedup (1/s)",
    "performance_per_core": "Performance per Core (GFLOPS)",
    "performance_gain": "Performance Gain",
}

WIDTH, HEIGHT = 640, 480
PLOT_LEFT, PLOT_RIGHT = 72, 470
PLOT_TOP, PLOT_BOTTOM = 48, 416


@dataclass(frozen=True)
class Series:
    label: str
    metric: str
    points: tuple[tuple[int, float, int], ...]  # (nodes, value, sample_count)

    def __post_init__(self) -> None:
        if not self.label:
            raise ValueError("series label must be non-empty")
        nodes = [p[0] for p in self.points]
        if any(b <= a for a, b in zip(nodes, nodes[1:])):
            raise ValueError(f"series {self.label!r}: nodes must be strictly increasing")


def build_series(points: Iterable[MetricPoint]) -> list[Series]:
    points = list(points)
    kinds = {(p.metric, p.family, p.case_name) for p in points}
    if len(kinds) > 1:
        raise MixedMetrics(f"points mix metric/family/case: {sorted(kinds)}")
    by_site: dict[str, dict[int, MetricPoint]] = {}
    for p in points:
        site = by_site.setdefault(p.site_id, {})
        if p.nodes in site:
            raise MixedMetrics(f"{p.site_id}: several points at nodes={p.nodes} "
                               f"(ppn {site[p.nodes].ppn} and {p.ppn}); filter by ppn")
        site[p.nodes] = p
    return [
        Series(label=site_id, metric=points[0].metric,
               points=tuple((n, by_site[site_id][n].value, by_site[site_id][n].sample_count)
                            for n in sorted(by_site[site_id])))
        for site_id in sorted(by_site)
    ]


def emit_csv(series: Sequence[Series]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(CSV_HEADER)
    for s in sorted(series, key=lambda s: s.label):
        for nodes, value, count in s.points:
            writer.writerow((s.label, s.metric, nodes, repr(float(value)), count))
    return buf.getvalue()


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def _tick_label(v: float) -> str:
    return f"{v:.3g}"


def emit_svg_chart(series: Sequence[Series], title: str) -> str:
    """Standalone 640x480 SVG line chart, one polyline and marker set per series."""
    series = [s for s in series if s.points]
    if not series:
        raise EmptyChart("nothing to plot")
    metric = series[0].metric
    node_ticks = sorted({n for s in series for n, _, _ in s.points})
    values = [v for s in series for _, v, _ in s.points]
    y_max = max(values) * 1.1
    y_min = min(0.0, min(values) * 1.1)
    if y_max <= y_min:
        y_max = y_min + 1.0
    x_lo, x_hi = node_ticks[0], node_ticks[-1]

    def px(nodes: int) -> float:
        if x_hi == x_lo:
            return (PLOT_LEFT + PLOT_RIGHT) / 2
        pad = 0.04 * (PLOT_RIGHT - PLOT_LEFT)
        span = PLOT_RIGHT - PLOT_LEFT - 2 * pad
        return PLOT_LEFT + pad + (nodes - x_lo) / (x_hi - x_lo) * span

    def py(value: float) -> float:
        return PLOT_BOTTOM - (value - y_min) / (y_max - y_min) * (PLOT_BOTTOM - PLOT_TOP)

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="Helvetica, Arial, sans-serif">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>',
        f'<text class="title" x="{(PLOT_LEFT + PLOT_RIGHT) / 2:.2f}" y="28" '
        f'text-anchor="middle" font-size="16">{escape(title)}</text>',
    ]

    for i in range(6):
        v = y_min + (y_max - y_min) * i / 5
        y = _fmt(py(v))
        out.append(f'<line x1="{PLOT_LEFT}" y1="{y}" x2="{PLOT_RIGHT}" y2="{y}" '
                   'stroke="#e0e0e0" stroke-width="1"/>')
        out.append(f'<text x="{PLOT_LEFT - 8}" y="{y}" dy="4" text-anchor="end" '
                   f'font-size="11">{_tick_label(v)}</text>')
    for n in node_ticks:
        x = _fmt(px(n))
        out.append(f'<line x1="{x}" y1="{PLOT_BOTTOM}" x2="{x}" y2="{PLOT_BOTTOM + 5}" '
                   'stroke="#000000" stroke-width="1"/>')
        out.append(f'<text class="xtick" x="{x}" y="{PLOT_BOTTOM + 18}" text-anchor="middle" '
                   f'font-size="11">{n}</text>')
    out.append(f'<line x1="{PLOT_LEFT}" y1="{PLOT_BOTTOM}" x2="{PLOT_RIGHT}" y2="{PLOT_BOTTOM}" '
               'stroke="#000000" stroke-width="1.5"/>')
    out.append(f'<line x1="{PLOT_LEFT}" y1="{PLOT_TOP}" x2="{PLOT_LEFT}" y2="{PLOT_BOTTOM}" '
               'stroke="#000000" stroke-width="1.5"/>')
    out.append(f'<text class="xlabel" x="{(PLOT_LEFT + PLOT_RIGHT) / 2:.2f}" '
               f'y="{PLOT_BOTTOM + 44}" text-anchor="middle" font-size="13">Number of Nodes</text>')
    y_mid = (PLOT_TOP + PLOT_BOTTOM) / 2
    out.append(f'<text class="ylabel" x="20" y="{y_mid:.2f}" text-anchor="middle" font-size="13" '
               f'transform="rotate(-90 20 {y_mid:.2f})">{escape(METRIC_TITLES.get(metric, metric))}</text>')

    for idx, s in enumerate(series):
        color = PALETTE[idx % len(PALETTE)]
        label = quoteattr(s.label)
        coords = [(px(n), py(v)) for n, v, _ in s.points]
        out.append(f'<g class="series" data-label={label}>')
        if len(coords) > 1:
            pts = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in coords)
            out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                       'stroke-width="2"/>')
        for x, y in coords:
            out.append(f'<circle class="marker" cx="{_fmt(x)}" cy="{_fmt(y)}" r="4" '
                       f'fill="{color}"/>')
        out.append("</g>")

    legend_x = PLOT_RIGHT + 20
    out.append('<g class="legend">')
    for idx, s in enumerate(series):
        color = PALETTE[idx % len(PALETTE)]
        y = PLOT_TOP + 10 + idx * 20
        out.append(f'<line x1="{legend_x}" y1="{y}" x2="{legend_x + 20}" y2="{y}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<circle cx="{legend_x + 10}" cy="{y}" r="4" fill="{color}"/>')
        out.append(f'<text x="{legend_x + 28}" y="{y}" dy="4" font-size="12">{escape(s.label)}</text>')
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render_png(series: Sequence[Series], title: str, path: Path | str) -> Path:
    """Same chart through matplotlib. Imports lazily; needs ``scalebench[plot]``."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    series = [s for s in series if s.points]
    if not series:
        raise EmptyChart("nothing to plot")
    fig, ax = plt.subplots(figsize=(6.4, 4.8), dpi=100)
    for idx, s in enumerate(series):
        xs = [n for n, _, _ in s.points]
        ys = [v for _, v, _ in s.points]
        ax.plot(xs, ys, marker="o", color=PALETTE[idx % len(PALETTE)], label=s.label)
    ticks = sorted({n for s in series for n, _, _ in s.points})
    ax.set_xticks(ticks)
    ax.set_xlabel("Number of Nodes")
    ax.set_ylabel(METRIC_TITLES.get(series[0].metric, series[0].metric))
    ax.set_title(title)
    top = max(v for s in series for _, v, _ in s.points) * 1.1
    ax.set_ylim(min(0.0, ax.get_ylim()[0]), top if top > 0 else 1.0)
    ax.grid(True, color="#e0e0e0")
    ax.legend(frameon=False, fontsize="small")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path)
    plt.close(fig)
    return path


def chart_title(metric: str, case_name: str) -> str:
    name = METRIC_TITLES.get(metric, metric).split(" (")[0]
    return f"{case_name}: {name} vs Number of Nodes"


def write_report(points: Sequence[MetricPoint], out_dir: Path | str, case_name: str,
                 metric: str, png: bool = False) -> list[Path]:
    """Write ``<case>_<metric>.csv`` and ``.svg`` (and ``.png`` on request)."""
    series = build_series(points)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"{case_name}_{metric}"
    title = chart_title(metric, case_name)
    csv_path = out / f"{stem}.csv"
    svg_path = out / f"{stem}.svg"
    svg = emit_svg_chart(series, title)
    # newline="" keeps the CRLF row endings intact
    csv_path.write_text(emit_csv(series), encoding="utf-8", newline="")
    svg_path.write_text(svg, encoding="utf-8")
    paths = [csv_path, svg_path]
    if png:
        paths.append(render_png(series, title, out / f"{stem}.png"))
    return paths
