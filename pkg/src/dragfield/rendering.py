"""PNG output: field images, trajectory overlays, score-map heatmaps."""

from __future__ import annotations

import io
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np
from PIL import Image

from .field import FeatureField, default_projection, render_rgb

HANDLE_COLOR = (230, 40, 40)     # red: handle points
TARGET_COLOR = (40, 80, 230)     # blue: target points
TRAIL_COLOR = (250, 250, 60)


def to_uint8(img: np.ndarray) -> np.ndarray:
    return np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)


def png_bytes(rgb_u8: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(rgb_u8, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def save_png(rgb_u8: np.ndarray, path) -> None:
    with open(path, "wb") as fh:
        fh.write(png_bytes(rgb_u8))


def _plot(img: np.ndarray, x: int, y: int, color) -> None:
    h, w = img.shape[:2]
    if 0 <= x < w and 0 <= y < h:
        img[y, x] = color


def draw_line(img: np.ndarray, a: Tuple[int, int], b: Tuple[int, int], color) -> None:
    """Bresenham segment from a to b, endpoints included."""
    x0, y0 = int(a[0]), int(a[1])
    x1, y1 = int(b[0]), int(b[1])
    dx, dy = abs(x1 - x0), -abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    while True:
        _plot(img, x0, y0, color)
        if x0 == x1 and y0 == y1:
            return
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x0 += sx
        if e2 <= dx:
            err += dx
            y0 += sy


def draw_cross(img: np.ndarray, p: Tuple[int, int], color, arm: int = 3) -> None:
    x, y = int(p[0]), int(p[1])
    for d in range(-arm, arm + 1):
        _plot(img, x + d, y, color)
        _plot(img, x, y + d, color)


def field_image(field: FeatureField, projection: Optional[np.ndarray] = None) -> np.ndarray:
    return to_uint8(render_rgb(field, projection))


def overlay_trajectories(img_u8: np.ndarray, trajectories: Sequence[Sequence],
                         targets: Sequence[Tuple[int, int]]) -> np.ndarray:
    """Draw per-point trails (handle red, target blue) on a copy."""
    out = img_u8.copy()
    for trail, target in zip(trajectories, targets):
        pts = [tuple(p) for p in trail]
        for a, b in zip(pts, pts[1:]):
            draw_line(out, a, b, TRAIL_COLOR)
        if pts:
            draw_cross(out, pts[-1], HANDLE_COLOR)
        draw_cross(out, target, TARGET_COLOR)
    return out


def heatmap_overlay(img_u8: np.ndarray, scores: np.ndarray,
                    origin: Tuple[int, int], alpha: float = 0.65) -> np.ndarray:
    """Blend a score grid (normalized to its own min/max) over the image.

    origin is the (x0, y0) field position of the grid's top-left cell.
    """
    out = img_u8.astype(np.float64)
    lo, hi = float(scores.min()), float(scores.max())
    norm = np.zeros_like(scores) if hi - lo < 1e-12 else (scores - lo) / (hi - lo)
    gh, gw = norm.shape
    x0, y0 = origin
    h, w = out.shape[:2]
    ys = slice(max(0, y0), min(h, y0 + gh))
    xs = slice(max(0, x0), min(w, x0 + gw))
    sub = norm[ys.start - y0:ys.stop - y0, xs.start - x0:xs.stop - x0]
    heat = np.stack([255.0 * sub, 40.0 * sub, 255.0 * (1.0 - sub)], axis=-1)
    out[ys, xs] = (1.0 - alpha) * out[ys, xs] + alpha * heat
    return np.clip(np.round(out), 0, 255).astype(np.uint8)
