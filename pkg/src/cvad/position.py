"""Position context: multi-scale window attention over the representative frame.

Each scale tiles the frame into non-overlapping square windows, every window
is embedded and compared with the query text, the per-scale similarity grids
are upsampled to frame resolution and averaged. The min-max normalized map
then masks the frame.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image

from .embedding import EmbeddingGateway, TextQuery, similarities

DEFAULT_SCALES = (48, 80, 120)


@dataclass
class WindowGrid:
    windows: list[np.ndarray]  # row-major
    rows: int
    cols: int
    scale: int

    def __len__(self) -> int:
        return len(self.windows)


@dataclass
class SimilarityMap:
    values: np.ndarray  # H x W
    per_scale: dict[int, np.ndarray] = field(default_factory=dict)  # scale -> rows x cols


@dataclass
class PositionContext:
    image: np.ndarray
    similarity: SimilarityMap


def check_scales(size: int, scales: Sequence[int]) -> None:
    if not scales:
        raise ValueError("at least one window scale is required")
    for s in scales:
        if s <= 0 or size % s:
            raise ValueError(f"window side {s} does not tile a {size}px frame")


def tile_windows(image: np.ndarray, side: int) -> WindowGrid:
    """Cut ``image`` into non-overlapping ``side`` x ``side`` windows, row-major."""
    h, w = image.shape[:2]
    if side <= 0 or h % side or w % side:
        raise ValueError(f"window side {side} does not tile a {h}x{w} image")
    rows, cols = h // side, w // side
    windows = [
        image[r * side : (r + 1) * side, c * side : (c + 1) * side]
        for r in range(rows)
        for c in range(cols)
    ]
    return WindowGrid(windows, rows, cols, side)


def _axis_weights(n_in: int, n_out: int):
    if n_in == 1 or n_out == 1:
        z = np.zeros(n_out, dtype=np.intp)
        return z, z, np.zeros(n_out)
    pos = np.arange(n_out) * ((n_in - 1) / (n_out - 1))
    lo = np.minimum(np.floor(pos).astype(np.intp), n_in - 1)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, pos - lo


def upsample_bilinear(grid: np.ndarray, height: int, width: int) -> np.ndarray:
    """Bilinear resize with corner-aligned sampling (first/last samples hit the grid corners)."""
    grid = np.asarray(grid, dtype=np.float64)
    y0, y1, wy = _axis_weights(grid.shape[0], height)
    x0, x1, wx = _axis_weights(grid.shape[1], width)
    wy = wy[:, None]
    wx = wx[None, :]
    top = grid[y0][:, x0] * (1 - wx) + grid[y0][:, x1] * wx
    bottom = grid[y1][:, x0] * (1 - wx) + grid[y1][:, x1] * wx
    return top * (1 - wy) + bottom * wy


def window_similarity_map(
    image: np.ndarray,
    query: TextQuery | str,
    gateway: EmbeddingGateway,
    scales: Sequence[int] = DEFAULT_SCALES,
) -> SimilarityMap:
    if isinstance(query, str):
        query = TextQuery.build(query)
    h, w = image.shape[:2]
    if not scales:
        raise ValueError("at least one window scale is required")
    text = gateway.encode_text(query)
    per_scale = {}
    total = np.zeros((h, w))
    for side in scales:
        grid = tile_windows(image, side)
        sims = similarities(gateway.encode_images(grid.windows), text)
        raw = sims.reshape(grid.rows, grid.cols)
        per_scale[side] = raw
        total += upsample_bilinear(raw, h, w)
    return SimilarityMap(total / len(scales), per_scale)


def min_max_normalize(values: np.ndarray) -> np.ndarray:
    """Scale to [0, 1]; a constant map normalizes to all ones."""
    values = np.asarray(values, dtype=np.float64)
    lo, hi = values.min(), values.max()
    span = hi - lo
    if span <= 1e-12 * max(1.0, abs(hi)):
        return np.ones_like(values)
    return np.clip((values - lo) / span, 0.0, 1.0)


def apply_attention(image: np.ndarray, sim_map: SimilarityMap | np.ndarray) -> np.ndarray:
    values = sim_map.values if isinstance(sim_map, SimilarityMap) else np.asarray(sim_map)
    if values.shape != image.shape[:2]:
        raise ValueError(f"map shape {values.shape} does not match image {image.shape[:2]}")
    weights = min_max_normalize(values)[..., None]
    # round half up so results do not depend on numpy's banker's rounding
    out = np.floor(weights * image.astype(np.float64) + 0.5)
    return np.clip(out, 0, 255).astype(np.uint8)


def position_context(
    image: np.ndarray,
    query: TextQuery | str,
    gateway: EmbeddingGateway,
    scales: Sequence[int] = DEFAULT_SCALES,
) -> PositionContext:
    sim = window_similarity_map(image, query, gateway, scales)
    return PositionContext(apply_attention(image, sim), sim)


def _to_gray(values: np.ndarray) -> Image.Image:
    return Image.fromarray((min_max_normalize(values) * 255).round().astype(np.uint8), mode="L")


def dump_position_debug(out_dir: str | Path, ctx: PositionContext, prefix: str = "") -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for side, raw in ctx.similarity.per_scale.items():
        _to_gray(raw).save(out / f"{prefix}map_{side}.png")
    _to_gray(ctx.similarity.values).save(out / f"{prefix}map_mean.png")
    Image.fromarray(ctx.image).save(out / f"{prefix}pc.png")
