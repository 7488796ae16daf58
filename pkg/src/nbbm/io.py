"""Result tables and CSV/JSON/SVG emission.

Output is deterministic byte for byte: rows are kept in sorted order and
floats are rendered with shortest round-trip repr.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

__all__ = ["OutputTable", "SvgSeries", "emit_csv", "emit_json", "emit_svg"]

COLUMNS = ("scenario", "N", "seed", "t", "metric", "value")


@dataclass
class OutputTable:
    """Rows of (scenario, N, seed, t, metric, value), kept sortable."""

    rows: list[tuple] = field(default_factory=list)

    def add(self, scenario: str, n: int, seed: int, t: float, metric: str,
            value: float):
        value = float(value)
        if not math.isfinite(value):
            raise ValueError(f"non-finite value for metric {metric!r}: {value}")
        self.rows.append((str(scenario), int(n), int(seed), float(t),
                          str(metric), value))

    def extend(self, rows: Iterable[tuple]):
        for r in rows:
            self.add(*r)

    def sort(self) -> "OutputTable":
        self.rows.sort()
        return self

    @classmethod
    def merge(cls, tables: Iterable["OutputTable"]) -> "OutputTable":
        out = cls()
        for t in tables:
            out.rows.extend(t.rows)
        return out.sort()

    def values(self, metric: str, n: int | None = None) -> np.ndarray:
        sel = [r[5] for r in self.rows
               if r[4] == metric and (n is None or r[1] == n)]
        return np.array(sel)

    def to_csv_string(self) -> str:
        lines = [",".join(COLUMNS)]
        for scenario, n, seed, t, metric, value in self.rows:
            lines.append(f"{_csv_quote(scenario)},{n},{seed},{t!r},"
                         f"{_csv_quote(metric)},{value!r}")
        return "\n".join(lines) + "\n"


def _csv_quote(s: str) -> str:
    if any(ch in s for ch in ',"\n\r'):
        return '"' + s.replace('"', '""') + '"'
    return s


def emit_csv(table: OutputTable, path):
    """Write the table as RFC-4180 CSV with a header row."""
    text = table.to_csv_string()
    with open(path, "w", newline="") as fh:
        fh.write(text)


def emit_json(table: OutputTable, path):
    """Write the table as a JSON array of row objects."""
    objs = [dict(zip(COLUMNS, row)) for row in table.rows]
    with open(path, "w") as fh:
        json.dump(objs, fh, indent=1, sort_keys=True)
        fh.write("\n")


@dataclass
class SvgSeries:
    """One plotted series: a polyline or a scatter layer.

    ``shade`` in [0, 1] maps to grey level (0 = black, 1 = light grey), so a
    sequence of snapshot layers can be drawn with decreasing brightness.
    """

    label: str
    x: Sequence[float]
    y: Sequence[float]
    kind: str = "line"          # "line" | "scatter"
    shade: float = 0.0


def emit_svg(series: Sequence[SvgSeries], path, *, title: str = "",
             width: int = 720, height: int = 480):
    """Minimal SVG scatter/line plot with axes; deterministic output."""
    series = list(series)
    xs = np.concatenate([np.asarray(s.x, dtype=float) for s in series]) if series else np.array([0.0, 1.0])
    ys = np.concatenate([np.asarray(s.y, dtype=float) for s in series]) if series else np.array([0.0, 1.0])
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(ys.min()), float(ys.max())
    if x1 <= x0:
        x1 = x0 + 1.0
    if y1 <= y0:
        y1 = y0 + 1.0
    ml, mr, mt, mb = 60, 20, 30, 45
    pw, ph = width - ml - mr, height - mt - mb

    def sx(v):
        return ml + (v - x0) / (x1 - x0) * pw

    def sy(v):
        return mt + (y1 - v) / (y1 - y0) * ph

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" '
        f'font-family="sans-serif" font-size="13">{title}</text>',
        f'<line x1="{ml}" y1="{mt + ph}" x2="{ml + pw}" y2="{mt + ph}" '
        f'stroke="black"/>',
        f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{mt + ph}" stroke="black"/>',
        f'<text x="{ml}" y="{height - 8}" font-family="sans-serif" '
        f'font-size="11">{x0:.4g}</text>',
        f'<text x="{ml + pw}" y="{height - 8}" text-anchor="end" '
        f'font-family="sans-serif" font-size="11">{x1:.4g}</text>',
        f'<text x="5" y="{mt + ph}" font-family="sans-serif" '
        f'font-size="11">{y0:.4g}</text>',
        f'<text x="5" y="{mt + 12}" font-family="sans-serif" '
        f'font-size="11">{y1:.4g}</text>',
    ]
    for i, s in enumerate(series):
        grey = max(0, min(220, int(round(220 * s.shade))))
        colour = f"rgb({grey},{grey},{grey})"
        x = np.asarray(s.x, dtype=float)
        y = np.asarray(s.y, dtype=float)
        if s.kind == "line":
            pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(x, y))
            parts.append(f'<polyline fill="none" stroke="{colour}" '
                         f'stroke-width="1.5" points="{pts}"/>')
        else:
            for a, b in zip(x, y):
                parts.append(f'<circle cx="{sx(a):.2f}" cy="{sy(b):.2f}" r="1.6" '
                             f'fill="{colour}"/>')
        if s.label:
            parts.append(f'<text x="{ml + pw - 6}" y="{mt + 16 + 14 * i}" '
                         f'text-anchor="end" font-family="sans-serif" '
                         f'font-size="11" fill="{colour}">{s.label}</text>')
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")
