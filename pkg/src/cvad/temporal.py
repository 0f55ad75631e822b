"""Temporal context: 2x2 grids of same-position windows from the four key frames."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image

from .embedding import EmbeddingGateway, TextQuery, similarities
from .keyframes import first_argmax
from .media import Frame
from .position import DEFAULT_SCALES, tile_windows

# quadrant (row, col) of key frame k_0..k_3 inside a grid
QUADRANTS = ((0, 0), (0, 1), (1, 0), (1, 1))


@dataclass(frozen=True, eq=False)
class GridImage:
    pixels: np.ndarray  # (2*scale) x (2*scale) x 3
    scale: int
    window_position: tuple[int, int]

    def quadrant(self, k: int) -> np.ndarray:
        r, c = QUADRANTS[k]
        s = self.scale
        return self.pixels[r * s : (r + 1) * s, c * s : (c + 1) * s]


@dataclass
class TemporalContext:
    grid: GridImage
    score: float
    candidates: list[GridImage]
    scores: np.ndarray


def _pixels(frames: Sequence[Frame | np.ndarray]) -> list[np.ndarray]:
    return [f.pixels if isinstance(f, Frame) else np.asarray(f) for f in frames]


def build_grids(key_frames: Sequence[Frame | np.ndarray], side: int) -> list[GridImage]:
    """One grid per window position; k_0 top-left, k_1 top-right, k_2 bottom-left, k_3 bottom-right."""
    if len(key_frames) != 4:
        raise ValueError(f"expected exactly 4 key frames, got {len(key_frames)}")
    tilings = [tile_windows(p, side) for p in _pixels(key_frames)]
    rows, cols = tilings[0].rows, tilings[0].cols
    grids = []
    for pos in range(rows * cols):
        u = [t.windows[pos] for t in tilings]
        pixels = np.concatenate(
            [np.concatenate([u[0], u[1]], axis=1), np.concatenate([u[2], u[3]], axis=1)], axis=0
        )
        grids.append(GridImage(pixels, side, divmod(pos, cols)))
    return grids


def candidate_grids(key_frames: Sequence[Frame | np.ndarray], scales: Sequence[int] = DEFAULT_SCALES) -> list[GridImage]:
    """All grids over every scale, scales ascending then positions row-major."""
    if not scales:
        raise ValueError("at least one window scale is required")
    out: list[GridImage] = []
    for side in sorted(scales):
        out.extend(build_grids(key_frames, side))
    return out


def select_temporal_context(
    key_frames: Sequence[Frame | np.ndarray],
    query: TextQuery | str,
    gateway: EmbeddingGateway,
    scales: Sequence[int] = DEFAULT_SCALES,
) -> TemporalContext:
    grids = candidate_grids(key_frames, scales)
    text = gateway.encode_text(query)
    scores = similarities(gateway.encode_images([g.pixels for g in grids]), text)
    best = first_argmax(scores)
    return TemporalContext(grids[best], float(scores[best]), grids, scores)


def dump_temporal_debug(out_dir: str | Path, ctx: TemporalContext, prefix: str = "", all_candidates: bool = False) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    Image.fromarray(ctx.grid.pixels).save(out / f"{prefix}tc.png")
    if all_candidates:
        for g, s in zip(ctx.candidates, ctx.scores):
            r, c = g.window_position
            Image.fromarray(g.pixels).save(out / f"{prefix}grid_{g.scale}_{r}_{c}_{s:+.4f}.png")
