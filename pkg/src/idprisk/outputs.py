"""Atomic CSV/JSON writers and a small SVG line/heatmap plotter."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from pathlib import Path
from typing import Iterable, Mapping, Sequence
from xml.sax.saxutils import escape

import numpy as np


def write_atomic(path: str | os.PathLike, text: str) -> Path:
    """Write ``text`` next to ``path`` and rename it into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def csv_text(rows: Sequence[Mapping], columns: Sequence[str] | None = None,
             comments: Iterable[str] = ()) -> str:
    """Comma-separated, header row, LF endings; ``comments`` become leading ``#`` lines."""
    rows = list(rows)
    if columns is None:
        columns = list(rows[0].keys()) if rows else []
    buf = io.StringIO()
    for c in comments:
        buf.write(f"# {c}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for r in rows:
        writer.writerow([_cell(r.get(c, "")) for c in columns])
    return buf.getvalue()


def write_csv(path, rows, columns=None, comments=()) -> Path:
    return write_atomic(path, csv_text(rows, columns, comments))


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, (set, frozenset)):
        return sorted(o)
    raise TypeError(f"cannot serialise {type(o).__name__}")


def json_text(data) -> str:
    return json.dumps(data, indent=2, sort_keys=True, default=_json_default, allow_nan=True) + "\n"


def write_json(path, data) -> Path:
    return write_atomic(path, json_text(data))


# --------------------------------------------------------------------------
# SVG

_W, _H, _PAD = 640, 440, 60
_COLOURS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")


def _fmt(v: float) -> str:
    return f"{v:.3g}"


def _scale(lo, hi, a, b):
    span = (hi - lo) or 1.0
    return lambda v: a + (v - lo) / span * (b - a)


def _frame(title, xlabel, ylabel, xlim, ylim, ticks=True):
    x0, x1 = _PAD, _W - 20
    y0, y1 = _H - _PAD, 30
    sx, sy = _scale(*xlim, x0, x1), _scale(*ylim, y0, y1)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="12">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2}" y="18" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>',
        f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>',
    ]
    for v in np.linspace(*xlim, 5) if ticks else ():
        parts.append(f'<text x="{sx(v):.1f}" y="{y0 + 16}" text-anchor="middle">{_fmt(v)}</text>')
    for v in np.linspace(*ylim, 5) if ticks else ():
        parts.append(f'<text x="{x0 - 6}" y="{sy(v) + 4:.1f}" text-anchor="end">{_fmt(v)}</text>')
    parts.append(f'<text x="{(x0 + x1) / 2}" y="{_H - 18}" text-anchor="middle">{escape(xlabel)}</text>')
    parts.append(f'<text x="16" y="{(y0 + y1) / 2}" text-anchor="middle" '
                 f'transform="rotate(-90 16 {(y0 + y1) / 2})">{escape(ylabel)}</text>')
    return parts, sx, sy


def _limits(values, fixed):
    if fixed is not None:
        return fixed
    v = np.asarray([x for x in values if math.isfinite(x)], dtype=np.float64)
    if v.size == 0:
        return (0.0, 1.0)
    lo, hi = float(v.min()), float(v.max())
    return (lo, hi) if hi > lo else (lo - 0.5, hi + 0.5)


def line_svg(series: Mapping[str, tuple[Sequence[float], Sequence[float]]], title: str = "",
             xlabel: str = "", ylabel: str = "", xlim=None, ylim=None,
             bands: Mapping[str, tuple[Sequence[float], Sequence[float], Sequence[float]]] | None = None) -> str:
    """Polylines, one per named series; optional shaded ``(x, lower, upper)`` bands."""
    bands = bands or {}
    xs = [x for s in series.values() for x in s[0]] + [x for b in bands.values() for x in b[0]]
    ys = ([y for s in series.values() for y in s[1]]
          + [y for b in bands.values() for y in (*b[1], *b[2])])
    parts, sx, sy = _frame(title, xlabel, ylabel, _limits(xs, xlim), _limits(ys, ylim))
    for n, (name, (x, lo, hi)) in enumerate(bands.items()):
        pts = [f"{sx(a):.1f},{sy(b):.1f}" for a, b in zip(x, hi)]
        pts += [f"{sx(a):.1f},{sy(b):.1f}" for a, b in zip(reversed(list(x)), reversed(list(lo)))]
        parts.append(f'<polygon points="{" ".join(pts)}" fill="{_COLOURS[n % len(_COLOURS)]}" '
                     f'fill-opacity="0.15" stroke="none"><title>{escape(name)}</title></polygon>')
    for n, (name, (x, y)) in enumerate(series.items()):
        colour = _COLOURS[n % len(_COLOURS)]
        pts = " ".join(f"{sx(a):.1f},{sy(b):.1f}" for a, b in zip(x, y)
                       if math.isfinite(a) and math.isfinite(b))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{colour}" stroke-width="1.5"/>')
        parts.append(f'<text x="{_W - 30}" y="{40 + 16 * n}" text-anchor="end" fill="{colour}">'
                     f'{escape(name)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def heatmap_svg(xs: Sequence[float], ys: Sequence[float], values, title: str = "",
                xlabel: str = "", ylabel: str = "") -> str:
    """Grid of cells coloured by ``values[i][j]`` at ``(xs[j], ys[i])``, values printed."""
    values = np.asarray(values, dtype=np.float64)
    parts, _, _ = _frame(title, xlabel, ylabel, (0, len(xs)), (0, len(ys)), ticks=False)
    lo, hi = np.nanmin(values), np.nanmax(values)
    x0, x1, y0, y1 = _PAD, _W - 20, _H - _PAD, 30
    cw, ch = (x1 - x0) / len(xs), (y0 - y1) / len(ys)
    for j, v in enumerate(xs):
        parts.append(f'<text x="{x0 + (j + 0.5) * cw:.1f}" y="{y0 + 16}" text-anchor="middle">{_fmt(v)}</text>')
    for i, v in enumerate(ys):
        parts.append(f'<text x="{x0 - 6}" y="{y0 - (i + 0.5) * ch + 4:.1f}" text-anchor="end">{_fmt(v)}</text>')
    for i in range(len(ys)):
        for j in range(len(xs)):
            v = values[i, j]
            t = 0.0 if hi == lo or not math.isfinite(v) else (v - lo) / (hi - lo)
            r, g, b = int(255 * t), int(80 + 100 * (1 - abs(2 * t - 1))), int(255 * (1 - t))
            x, y = x0 + j * cw, y0 - (i + 1) * ch
            parts.append(f'<rect x="{x:.1f}" y="{y:.1f}" width="{cw:.1f}" height="{ch:.1f}" '
                         f'fill="rgb({r},{g},{b})"><title>{_fmt(xs[j])}, {_fmt(ys[i])}: {v:.4f}</title></rect>')
            parts.append(f'<text x="{x + cw / 2:.1f}" y="{y + ch / 2 + 4:.1f}" text-anchor="middle" '
                         f'font-size="9" fill="white">{v:.3f}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_svg(path, text: str) -> Path:
    return write_atomic(path, text)
