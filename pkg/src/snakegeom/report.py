"""Self-describing outputs: canonical JSON, CSV with provenance header, bare SVG plots.

Every file carries the config fingerprint (sha256 of the canonical config)
and the seed.  JSON is written with sorted keys and ``repr`` floats, so equal
inputs give byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path

import numpy as np


def to_plain(obj):
    """Recursively turn numpy values, tuples and non-finite floats into JSON-safe objects."""
    if isinstance(obj, dict):
        return {str(k): to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_plain(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isfinite(x):
            return x
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    if obj is None or isinstance(obj, str):
        return obj
    return str(obj)


def canonical_json(obj) -> str:
    return json.dumps(to_plain(obj), sort_keys=True, separators=(",", ":"), allow_nan=False)


def fingerprint(config) -> str:
    """Stable hash of a configuration mapping (output directory excluded by the caller)."""
    return hashlib.sha256(canonical_json(config).encode()).hexdigest()


def write_json(path, payload, config, seed):
    body = dict(payload)
    body.update({"config": config, "fingerprint": fingerprint(config), "seed": seed})
    text = json.dumps(to_plain(body), sort_keys=True, indent=1, allow_nan=False) + "\n"
    Path(path).write_text(text)
    return path


def write_csv(path, header, rows, config, seed):
    """CSV preceded by ``#`` lines holding the fingerprint and seed."""
    lines = [f"# fingerprint={fingerprint(config)}", f"# seed={seed}", ",".join(header)]
    for r in rows:
        lines.append(",".join(_cell(v) for v in r))
    Path(path).write_text("\n".join(lines) + "\n")
    return path


def _cell(v):
    v = to_plain(v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def read_csv(path):
    """Header and rows of a file written by :func:`write_csv`, comments skipped."""
    rows = [line for line in Path(path).read_text().splitlines() if line and not line.startswith("#")]
    return rows[0].split(","), [r.split(",") for r in rows[1:]]


def write_svg(path, series, title="", xlabel="", ylabel="", fingerprint_text="", width=640, height=400):
    """
    Line plot of ``series``: a mapping ``name -> (xs, ys)``.

    Only polylines, a frame and min/max tick labels; enough to eyeball a curve.
    """
    pad = 50
    xs_all = np.concatenate([np.asarray(x, float) for x, _ in series.values()])
    ys_all = np.concatenate([np.asarray(y, float) for _, y in series.values()])
    finite = np.isfinite(xs_all) & np.isfinite(ys_all)
    x0, x1 = float(xs_all[finite].min()), float(xs_all[finite].max())
    y0, y1 = float(ys_all[finite].min()), float(ys_all[finite].max())
    x1 = x1 if x1 > x0 else x0 + 1.0
    y1 = y1 if y1 > y0 else y0 + 1.0

    def px(x):
        return pad + (x - x0) / (x1 - x0) * (width - 2 * pad)

    def py(y):
        return height - pad - (y - y0) / (y1 - y0) * (height - 2 * pad)

    colours = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">',
           f"<!-- fingerprint={fingerprint_text} -->",
           f'<rect x="{pad}" y="{pad}" width="{width - 2 * pad}" height="{height - 2 * pad}" '
           'fill="none" stroke="black"/>',
           f'<text x="{width / 2}" y="{pad / 2}" text-anchor="middle" font-size="14">{title}</text>',
           f'<text x="{width / 2}" y="{height - 10}" text-anchor="middle" font-size="12">{xlabel}</text>',
           f'<text x="12" y="{height / 2}" font-size="12" transform="rotate(-90 12 {height / 2})">{ylabel}</text>',
           f'<text x="{pad}" y="{height - pad + 15}" font-size="10">{x0:.4g}</text>',
           f'<text x="{width - pad}" y="{height - pad + 15}" font-size="10" text-anchor="end">{x1:.4g}</text>',
           f'<text x="{pad - 5}" y="{height - pad}" font-size="10" text-anchor="end">{y0:.4g}</text>',
           f'<text x="{pad - 5}" y="{pad + 10}" font-size="10" text-anchor="end">{y1:.4g}</text>']
    for k, (name, (xs, ys)) in enumerate(series.items()):
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(np.asarray(xs, float), np.asarray(ys, float))
                       if math.isfinite(a) and math.isfinite(b))
        colour = colours[k % len(colours)]
        out.append(f'<polyline fill="none" stroke="{colour}" stroke-width="1.2" points="{pts}"/>')
        out.append(f'<text x="{width - pad + 4}" y="{pad + 14 * (k + 1)}" font-size="10" fill="{colour}">{name}</text>')
    out.append("</svg>")
    Path(path).write_text("\n".join(out) + "\n")
    return path
