"""CSV and SVG emission.

CSV files are UTF-8 with LF line endings.  Relativities and probabilities
are written to 3 decimals; with ``raw=True`` every numeric column gets a
``*_raw`` twin holding the shortest round-tripping ``repr`` of the float.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

__all__ = ["Column", "Table", "PricingReport", "write_csv", "read_csv", "efficiency_svg"]


def fmt3(x: float) -> str:
    return f"{x:.3f}"


def fmt6(x: float) -> str:
    return f"{x:.6f}"


@dataclass(frozen=True)
class Column:
    name: str
    values: tuple
    fmt: object = None  # None marks a text/integer column without a raw twin


@dataclass
class Table:
    columns: list

    def header(self, raw: bool):
        out = []
        for c in self.columns:
            out.append(c.name)
            if raw and c.fmt is not None:
                out.append(c.name + "_raw")
        return out

    def rows(self, raw: bool):
        n = len(self.columns[0].values)
        for i in range(n):
            row = []
            for c in self.columns:
                v = c.values[i]
                row.append(str(v) if c.fmt is None else c.fmt(v))
                if raw and c.fmt is not None:
                    row.append(repr(float(v)))
            yield row


def render_csv(table: Table, raw: bool = False) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(table.header(raw))
    w.writerows(table.rows(raw))
    return buf.getvalue()


def write_csv(path, table: Table, raw: bool = False) -> Path:
    path = Path(path)
    path.write_bytes(render_csv(table, raw).encode("utf-8"))
    return path


def read_csv(path) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


@dataclass
class PricingReport:
    """Per-level rows plus run metadata; ``premium = base * relativity`` exactly."""

    levels: tuple
    P: tuple
    relativities: dict
    chosen: str
    base: float
    metadata: dict = field(default_factory=dict)

    @property
    def premiums(self):
        r = self.relativities[self.chosen]
        return tuple(self.base * x for x in r)

    def table(self) -> Table:
        s = len(self.levels)
        return Table([
            Column("level", self.levels),
            Column("P", self.P, fmt3),
            *(Column(m, self.relativities[m], fmt3) for m in self.relativities),
            Column("relativity", self.relativities[self.chosen], fmt3),
            Column("base", (self.base,) * s, fmt3),
            Column("premium", self.premiums, fmt3),
        ])


def write_meta(path, meta: dict) -> Path:
    path = Path(path)
    path.write_bytes((json.dumps(meta, indent=2, sort_keys=True) + "\n").encode("utf-8"))
    return path


# ---------------------------------------------------------------------------
# Chart
# ---------------------------------------------------------------------------

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def efficiency_svg(grid: Sequence[float], curves: dict, xlabel="claim frequency",
                   ylabel="efficiency") -> str:
    """Line chart: one polyline per curve, axes with labels and a legend."""
    W, H, L, R, T, B = 640, 420, 70, 150, 20, 50
    pw, ph = W - L - R, H - T - B
    xs = list(grid)
    ys = [y for c in curves.values() for y in c]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys + [0.0]), max(ys + [0.0])
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0

    def px(x):
        return L + (x - x0) / (x1 - x0) * pw

    def py(y):
        return T + ph - (y - y0) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
        f'viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
        f'<line x1="{L}" y1="{T + ph}" x2="{L + pw}" y2="{T + ph}" stroke="black"/>',
        f'<line x1="{L}" y1="{T}" x2="{L}" y2="{T + ph}" stroke="black"/>',
    ]
    for i in range(5):
        xv = x0 + (x1 - x0) * i / 4
        yv = y0 + (y1 - y0) * i / 4
        out.append(f'<text x="{px(xv):.2f}" y="{T + ph + 16}" text-anchor="middle">{xv:.3g}</text>')
        out.append(f'<text x="{L - 6}" y="{py(yv) + 4:.2f}" text-anchor="end">{yv:.3g}</text>')
    out.append(f'<text x="{L + pw / 2:.2f}" y="{H - 10}" text-anchor="middle">{xlabel}</text>')
    out.append(
        f'<text x="16" y="{T + ph / 2:.2f}" text-anchor="middle" '
        f'transform="rotate(-90 16 {T + ph / 2:.2f})">{ylabel}</text>'
    )
    for k, (name, ys_c) in enumerate(curves.items()):
        color = _PALETTE[k % len(_PALETTE)]
        pts = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(xs, ys_c))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        ly = T + 14 + 18 * k
        out.append(f'<line x1="{L + pw + 10}" y1="{ly}" x2="{L + pw + 30}" y2="{ly}" stroke="{color}"/>')
        out.append(f'<text x="{L + pw + 36}" y="{ly + 4}">{name}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
