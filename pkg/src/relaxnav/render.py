"""Raster rendering of maps, plans and cost fields (PNG via Pillow)."""

from __future__ import annotations

import io

import numpy as np
from PIL import Image

from .semantic_map import RegionClass, SemanticGrid

# fixed palette by label name; unknown labels fall back by region class
LABEL_COLORS = {
    "sidewalk": (236, 233, 216),  # ivory
    "grass": (122, 181, 92),
    "road": (128, 128, 132),
    "living_street": (150, 150, 150),
    "parking": (176, 176, 176),
    "crosswalk": (245, 196, 132),
    "rough": (190, 168, 120),
    "building": (232, 134, 58),
    "water": (88, 128, 228),
    "blocked": (196, 64, 64),
}

CLASS_FALLBACK = {
    RegionClass.FREE: (230, 230, 220),
    RegionClass.SOFT: (170, 190, 140),
    RegionClass.HARD: (90, 90, 90),
}


def label_palette(grid: SemanticGrid) -> list:
    pal = []
    for name, cls in grid.label_table:
        pal.append(LABEL_COLORS.get(name, CLASS_FALLBACK[cls]))
    return pal


def render_map(grid: SemanticGrid, scale: int = 1) -> Image.Image:
    """8-bit indexed image of the label raster."""
    img = Image.fromarray(grid.labels, mode="P")
    flat = []
    for rgb in label_palette(grid):
        flat.extend(rgb)
    flat.extend([0] * (768 - len(flat)))
    img.putpalette(flat)
    if scale > 1:
        img = img.resize((grid.width * scale, grid.height * scale),
                         Image.NEAREST)
    return img


def render_overlay(grid: SemanticGrid, paths=(), relaxed_cells=(),
                   scale: int = 4) -> Image.Image:
    """RGB overlay: relaxed cells highlighted, paths drawn on top."""
    base = render_map(grid, scale=1).convert("RGB")
    arr = np.array(base)
    for flat in relaxed_cells:
        r, c = divmod(int(flat), grid.width)
        arr[r, c] = (0.45 * arr[r, c] + 0.55 * np.array((255, 80, 80))).astype(np.uint8)
    img = Image.fromarray(arr).resize(
        (grid.width * scale, grid.height * scale), Image.NEAREST)
    from PIL import ImageDraw

    draw = ImageDraw.Draw(img)
    colors = [(20, 60, 220), (220, 40, 160), (20, 160, 60)]
    res = grid.resolution
    for k, poly in enumerate(paths):
        if len(poly) < 2:
            continue
        pts = [(x / res * scale, y / res * scale) for (x, y) in poly]
        draw.line(pts, fill=colors[k % len(colors)], width=max(1, scale // 2))
    return img


def png_bytes(img: Image.Image) -> bytes:
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()
