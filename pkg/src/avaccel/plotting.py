"""Deterministic loss-curve SVG export.

Reads one or more ``loss.csv`` files (header ``epoch,train_mae,val_mae``)
and draws one polyline per (file, train/val) series onto a fixed-size,
self-contained SVG — no scripts, no external assets, and byte-identical
output for identical input.
"""

from __future__ import annotations

from pathlib import Path

from .errors import DataError

__all__ = ["read_loss_csv", "render_loss_svg", "write_loss_svg"]

_HEADER = "epoch,train_mae,val_mae"

# color cycle, assigned to series in input order
_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
            "#9467bd", "#8c564b", "#17becf", "#e377c2",
            "#7f7f7f", "#bcbd22")

_W, _H = 840, 480
_ML, _MR, _MT, _MB = 64, 200, 24, 48  # margins: right one holds the legend


def read_loss_csv(path) -> list:
    """Rows of (epoch, train_mae, val_mae); malformed input names the line."""
    p = Path(path)
    if not p.is_file():
        raise DataError(f"loss CSV not found: {p}")
    lines = p.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0].strip() != _HEADER:
        raise DataError(f"{p} line 1: expected header {_HEADER!r}")
    rows = []
    for i, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 3:
            raise DataError(f"{p} line {i}: expected 3 comma-separated values")
        try:
            rows.append((int(parts[0]), float(parts[1]), float(parts[2])))
        except ValueError as exc:
            raise DataError(f"{p} line {i}: {exc}") from exc
    if not rows:
        raise DataError(f"{p} has a header but no data rows")
    return rows


def _ticks(lo: float, hi: float, n: int = 5) -> list:
    if hi <= lo:
        hi = lo + 1.0
    step = (hi - lo) / (n - 1)
    return [lo + i * step for i in range(n)]


def render_loss_svg(csv_paths) -> str:
    """The SVG document (a string) plotting every file's two series."""
    csv_paths = [Path(p) for p in csv_paths]
    if not csv_paths:
        raise DataError("nothing to plot")
    series = []  # (label, [(epoch, mae), ...])
    for p in csv_paths:
        rows = read_loss_csv(p)
        series.append((f"{p.stem}/train", [(r[0], r[1]) for r in rows]))
        series.append((f"{p.stem}/val", [(r[0], r[2]) for r in rows]))

    xs = [e for _, pts in series for e, _ in pts]
    ys = [v for _, pts in series for _, v in pts]
    x_lo, x_hi = float(min(xs)), float(max(xs))
    y_lo, y_hi = 0.0, max(ys) * 1.05 if max(ys) > 0 else 1.0
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    px_w = _W - _ML - _MR
    px_h = _H - _MT - _MB

    def sx(x):
        return _ML + (x - x_lo) / (x_hi - x_lo) * px_w

    def sy(y):
        return _MT + px_h - (y - y_lo) / (y_hi - y_lo) * px_h

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<rect x="{_ML}" y="{_MT}" width="{px_w}" height="{px_h}" '
        f'fill="none" stroke="#333333" stroke-width="1"/>',
    ]
    for t in _ticks(x_lo, x_hi):
        x = sx(t)
        out.append(f'<line x1="{x:.2f}" y1="{_MT + px_h}" x2="{x:.2f}" '
                   f'y2="{_MT + px_h + 5}" stroke="#333333"/>')
        out.append(f'<text x="{x:.2f}" y="{_MT + px_h + 20}" font-size="12" '
                   f'text-anchor="middle" font-family="sans-serif">{t:.4g}</text>')
    for t in _ticks(y_lo, y_hi):
        y = sy(t)
        out.append(f'<line x1="{_ML - 5}" y1="{y:.2f}" x2="{_ML}" y2="{y:.2f}" '
                   f'stroke="#333333"/>')
        out.append(f'<text x="{_ML - 8}" y="{y + 4:.2f}" font-size="12" '
                   f'text-anchor="end" font-family="sans-serif">{t:.4g}</text>')
    out.append(f'<text x="{_ML + px_w / 2:.2f}" y="{_H - 10}" font-size="13" '
               f'text-anchor="middle" font-family="sans-serif">epoch</text>')
    out.append(f'<text x="16" y="{_MT + px_h / 2:.2f}" font-size="13" '
               f'text-anchor="middle" font-family="sans-serif" '
               f'transform="rotate(-90 16 {_MT + px_h / 2:.2f})">MAE</text>')

    for k, (label, pts) in enumerate(series):
        color = _PALETTE[k % len(_PALETTE)]
        coords = " ".join(f"{sx(e):.2f},{sy(v):.2f}" for e, v in pts)
        out.append(f'<polyline points="{coords}" fill="none" stroke="{color}" '
                   f'stroke-width="1.5"/>')
        ly = _MT + 16 + 18 * k
        out.append(f'<line x1="{_W - _MR + 12}" y1="{ly - 4}" '
                   f'x2="{_W - _MR + 36}" y2="{ly - 4}" stroke="{color}" '
                   f'stroke-width="1.5"/>')
        out.append(f'<text x="{_W - _MR + 42}" y="{ly}" font-size="12" '
                   f'font-family="sans-serif">{label}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_loss_svg(csv_paths, out_path) -> Path:
    svg = render_loss_svg(csv_paths)
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(svg, encoding="utf-8")
    return out
