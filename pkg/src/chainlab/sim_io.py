"""CSV/JSON/SVG artifact writers shared by the experiment harness.

CSV dialect: UTF-8, comma separator, "." decimal, one header row, floats
formatted with 17 significant digits so they round-trip exactly.  SVG plots
are emitted directly as line/scatter primitives with no plotting
dependency.
"""

import json
import os
import time

import numpy as np


def format_float(x) -> str:
    return format(float(x), ".17g")


def write_csv(path, header, columns):
    """Write named columns (equal length) as a CSV file."""
    cols = [np.asarray(c) for c in columns]
    nrow = len(cols[0])
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(nrow):
            cells = []
            for c in cols:
                v = c[i]
                if isinstance(v, (str, np.str_)):
                    cells.append(str(v))
                elif isinstance(v, (int, np.integer)):
                    cells.append(str(int(v)))
                else:
                    cells.append(format_float(v))
            fh.write(",".join(cells) + "\n")


def read_csv_columns(path):
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    cols = {}
    for j, name in enumerate(header):
        vals = [row[j] for row in rows]
        try:
            cols[name] = np.array([float(v) for v in vals])
        except ValueError:
            cols[name] = np.array(vals)
    return cols


def write_json(path, payload):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


class Manifest:
    """Run manifest: config echo, version, seeds, wall time, outcome.

    Written even when the run fails, with the error provenance recorded.
    """

    def __init__(self, out_dir, config, version, seed):
        self.path = os.path.join(out_dir, "manifest.json")
        self.doc = {
            "config": config,
            "version": version,
            "seed": seed,
            "started_unix": time.time(),
            "status": "running",
            "artifacts": [],
        }

    def add_artifact(self, name):
        self.doc["artifacts"].append(name)

    def finish(self, status="ok", error=None, provenance=None):
        self.doc["status"] = status
        if error is not None:
            self.doc["error"] = str(error)
            self.doc["error_provenance"] = provenance or type(error).__module__
        self.doc["wall_time_s"] = time.time() - self.doc["started_unix"]
        write_json(self.path, self.doc)


# -- minimal SVG line/scatter plots --------------------------------------

_SVG_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _ticks(lo, hi, count=5):
    if hi <= lo:
        hi = lo + 1.0
    raw = np.linspace(lo, hi, count)
    return raw


def write_svg_plot(path, series, title="", xlabel="", ylabel="", logx=False, logy=False,
                   width=640, height=420):
    """Plot a list of (label, x, y) line series into a standalone SVG file."""
    margin = 60
    inner_w, inner_h = width - 2 * margin, height - 2 * margin

    def tx(v):
        return np.log10(v) if logx else np.asarray(v, dtype=float)

    def ty(v):
        return np.log10(v) if logy else np.asarray(v, dtype=float)

    xs = np.concatenate([tx(s[1]) for s in series])
    ys = np.concatenate([ty(s[2]) for s in series])
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(ys.min()), float(ys.max())
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0

    def px(v):
        return margin + (v - x0) / (x1 - x0) * inner_w

    def py(v):
        return height - margin - (v - y0) / (y1 - y0) * inner_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<rect x="{margin}" y="{margin}" width="{inner_w}" height="{inner_h}" '
        'fill="none" stroke="#444"/>',
    ]
    for v in _ticks(x0, x1):
        parts.append(
            f'<text x="{px(v):.1f}" y="{height - margin + 18:.1f}" font-size="11" '
            f'text-anchor="middle">{v:.3g}</text>'
        )
    for v in _ticks(y0, y1):
        parts.append(
            f'<text x="{margin - 6:.1f}" y="{py(v) + 4:.1f}" font-size="11" '
            f'text-anchor="end">{v:.3g}</text>'
        )
    for k, (label, x, y) in enumerate(series):
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(tx(x), ty(y)))
        color = _SVG_COLORS[k % len(_SVG_COLORS)]
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        parts.append(
            f'<text x="{width - margin - 4}" y="{margin + 16 + 14 * k}" font-size="12" '
            f'text-anchor="end" fill="{color}">{label}</text>'
        )
    if title:
        parts.append(
            f'<text x="{width / 2:.0f}" y="24" font-size="14" text-anchor="middle">{title}</text>'
        )
    if xlabel:
        parts.append(
            f'<text x="{width / 2:.0f}" y="{height - 10}" font-size="12" '
            f'text-anchor="middle">{xlabel}</text>'
        )
    if ylabel:
        parts.append(
            f'<text x="16" y="{height / 2:.0f}" font-size="12" text-anchor="middle" '
            f'transform="rotate(-90 16 {height / 2:.0f})">{ylabel}</text>'
        )
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts) + "\n")
