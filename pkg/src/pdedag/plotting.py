"""Deterministic SVG heatmaps of (t, x) solution fields."""

from __future__ import annotations

from pathlib import Path

import numpy as np

# piecewise-linear colormap through five anchor colors, tabulated to 256
# entries at import time so identical inputs give identical bytes
_ANCHORS = ((68, 1, 84), (59, 82, 139), (33, 145, 140), (94, 201, 98), (253, 231, 37))


def _build_table() -> list[str]:
    table = []
    segments = len(_ANCHORS) - 1
    for i in range(256):
        pos = i / 255.0 * segments
        seg = min(int(pos), segments - 1)
        frac = pos - seg
        rgb = [
            round(_ANCHORS[seg][c] * (1.0 - frac) + _ANCHORS[seg + 1][c] * frac)
            for c in range(3)
        ]
        table.append(f"#{rgb[0]:02x}{rgb[1]:02x}{rgb[2]:02x}")
    return table


COLOR_TABLE = _build_table()


def export_heatmap(field: np.ndarray, path, cell: int = 3, title: str | None = None) -> Path:
    """Write an SVG heatmap of ``field`` (rows = t, columns = x).

    Uses the fixed 256-entry color table plus a colorbar; output bytes are a
    pure function of the inputs.
    """
    field = np.asarray(field, dtype=np.float64)
    if field.ndim != 2:
        raise ValueError(f"field must be 2-D, got shape {field.shape}")
    if not np.all(np.isfinite(field)):
        raise ValueError("field contains non-finite values")
    n_t, n_x = field.shape
    vmin, vmax = float(field.min()), float(field.max())
    if vmax > vmin:
        idx = np.clip(((field - vmin) / (vmax - vmin) * 255.0).round().astype(int), 0, 255)
    else:
        idx = np.full((n_t, n_x), 128, dtype=int)

    bar_w = 14
    pad = 4
    width = n_x * cell + bar_w + 3 * pad
    height = n_t * cell + (18 if title else 0) + 2 * pad
    top = (18 if title else 0) + pad
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
    ]
    if title:
        lines.append(f'<text x="{pad}" y="14" font-family="monospace" font-size="12">{title}</text>')
    for i in range(n_t):
        y = top + i * cell
        row = idx[i]
        # merge horizontal runs of equal color to keep the file compact
        start = 0
        for j in range(1, n_x + 1):
            if j == n_x or row[j] != row[start]:
                lines.append(
                    f'<rect x="{pad + start * cell}" y="{y}" width="{(j - start) * cell}" '
                    f'height="{cell}" fill="{COLOR_TABLE[row[start]]}"/>'
                )
                start = j
    bar_x = pad + n_x * cell + pad
    bar_h = n_t * cell
    for i in range(256):
        y = top + bar_h - (i + 1) * bar_h / 256.0
        lines.append(
            f'<rect x="{bar_x}" y="{y:.2f}" width="{bar_w}" height="{bar_h / 256.0 + 0.5:.2f}" fill="{COLOR_TABLE[i]}"/>'
        )
    lines.append(f'<title>range [{vmin:.6g}, {vmax:.6g}]</title>')
    lines.append("</svg>")
    out = Path(path)
    out.write_text("\n".join(lines) + "\n")
    return out
