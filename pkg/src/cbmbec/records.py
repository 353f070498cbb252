"""Persisted artifacts: CSV tables and JSON documents that carry their run config.

CSV files start with one ``# config: {...}`` comment line holding the resolved
configuration as JSON; :func:`read_csv` returns it together with the rows.
Floats are written with ``repr`` so a round trip is exact.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

CONFIG_PREFIX = "# config: "


def _plain(obj):
    """Recursively convert numpy scalars/arrays and tuples to JSON-native types."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if v is None:
        return ""
    return str(v)


def _parse_cell(text: str):
    if text == "":
        return None
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


def write_csv(path, header, rows, config: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        fh.write(CONFIG_PREFIX + json.dumps(_plain(config), sort_keys=True) + "\n")
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])
    return path


def read_csv(path) -> tuple[dict, list[str], list[list]]:
    with Path(path).open(newline="") as fh:
        first = fh.readline()
        if not first.startswith(CONFIG_PREFIX):
            raise ValueError(f"{path}: missing config header line")
        config = json.loads(first[len(CONFIG_PREFIX):])
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[_parse_cell(c) for c in row] for row in reader]
    return config, header, rows


def write_json(path, config: dict, result: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {"config": _plain(config), "result": _plain(result)}
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def read_json(path) -> tuple[dict, dict]:
    doc = json.loads(Path(path).read_text())
    return doc["config"], doc["result"]


_PALETTE = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"]


def write_svg_curves(path, curves, config: dict, title: str = "", xlabel: str = "x", ylabel: str = "y", markers=()) -> Path:
    """Minimal line plot.  ``curves`` is a list of (label, xs, ys); ``markers``
    a list of (x, y) points drawn as open circles."""
    W, H, pad = 640, 420, 50
    xs_all = np.concatenate([np.asarray(c[1], float) for c in curves])
    ys_all = np.concatenate([np.asarray(c[2], float) for c in curves])
    x0, x1 = float(xs_all.min()), float(xs_all.max())
    y0, y1 = float(ys_all.min()), float(ys_all.max())
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0

    def px(x):
        return pad + (x - x0) / (x1 - x0) * (W - 2 * pad)

    def py(y):
        return H - pad - (y - y0) / (y1 - y0) * (H - 2 * pad)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        f"<metadata>{escape(json.dumps(_plain(config), sort_keys=True))}</metadata>",
        f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
        f'<line x1="{pad}" y1="{H - pad}" x2="{W - pad}" y2="{H - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{H - pad}" stroke="black"/>',
        f'<text x="{W / 2}" y="{pad / 2}" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<text x="{W / 2}" y="{H - 10}" text-anchor="middle" font-size="12">{escape(xlabel)}</text>',
        f'<text x="15" y="{H / 2}" text-anchor="middle" font-size="12" transform="rotate(-90 15 {H / 2})">{escape(ylabel)}</text>',
        f'<text x="{pad}" y="{H - pad + 15}" font-size="10">{x0:.3g}</text>',
        f'<text x="{W - pad}" y="{H - pad + 15}" font-size="10" text-anchor="end">{x1:.3g}</text>',
        f'<text x="{pad - 5}" y="{H - pad}" font-size="10" text-anchor="end">{y0:.3g}</text>',
        f'<text x="{pad - 5}" y="{pad + 5}" font-size="10" text-anchor="end">{y1:.3g}</text>',
    ]
    for k, (label, xs, ys) in enumerate(curves):
        color = _PALETTE[k % len(_PALETTE)]
        pts = " ".join(f"{px(float(x)):.2f},{py(float(y)):.2f}" for x, y in zip(xs, ys))
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"><title>{escape(str(label))}</title></polyline>')
        parts.append(f'<text x="{W - pad + 4}" y="{pad + 12 * k}" font-size="9" fill="{color}">{escape(str(label))}</text>')
    for x, y in markers:
        parts.append(f'<circle cx="{px(x):.2f}" cy="{py(y):.2f}" r="4" fill="none" stroke="black"/>')
    parts.append("</svg>")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(parts) + "\n")
    return path


def read_svg_config(path) -> dict:
    import re
    from xml.sax.saxutils import unescape

    m = re.search(r"<metadata>(.*?)</metadata>", Path(path).read_text(), re.S)
    if m is None:
        raise ValueError(f"{path}: no embedded config")
    return json.loads(unescape(m.group(1)))
