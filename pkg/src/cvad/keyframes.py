"""Key frame selection for one segment.

The default strategy picks the frame most similar to the query text, then
takes the frame at the same offset inside each of four equal groups, so the
four key frames are both text-aligned and evenly spread in time.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .embedding import EmbeddingGateway, TextQuery, similarities
from .media import Frame, Segment


class KeyFrameStrategy(str, enum.Enum):
    RANDOM = "random"
    CLIP = "clip"
    GROUP_THEN_CLIP = "group-clip"
    CLIP_THEN_GROUP = "clip-group"


@dataclass(frozen=True)
class KeyFrameSet:
    rep_frame: Frame
    rep_index: int
    keys: tuple[Frame, Frame, Frame, Frame]
    key_indices: tuple[int, int, int, int]
    scores: np.ndarray | None = None


def first_argmax(values: Sequence[float]) -> int:
    """Index of the maximum; the lowest index wins ties."""
    values = np.asarray(values)
    if values.size == 0:
        raise ValueError("argmax of an empty sequence")
    return int(np.argmax(values))  # numpy returns the first occurrence


def frame_scores(frames: Sequence[Frame], query: TextQuery | str, gateway: EmbeddingGateway) -> np.ndarray:
    text = gateway.encode_text(query)
    embeds = gateway.encode_images([f.pixels for f in frames])
    return similarities(embeds, text)


def select_representative(
    segment: Segment | Sequence[Frame], query: TextQuery | str, gateway: EmbeddingGateway
) -> tuple[int, np.ndarray]:
    """Return (index of the frame most similar to ``query``, all similarities)."""
    frames = segment.frames if isinstance(segment, Segment) else segment
    if not frames:
        raise ValueError("cannot select from an empty segment")
    scores = frame_scores(frames, query, gateway)
    return first_argmax(scores), scores


def key_indices_for(n: int, rep_index: int) -> tuple[int, int, int, int]:
    if n < 4 or n % 4:
        raise ValueError(f"segment length must be a positive multiple of 4, got {n}")
    if not 0 <= rep_index < n:
        raise ValueError(f"representative index {rep_index} outside [0, {n})")
    group = n // 4
    offset = rep_index % group
    return tuple(i * group + offset for i in range(4))  # type: ignore[return-value]


def select_key_frames(segment: Segment | Sequence[Frame], rep_index: int) -> KeyFrameSet:
    frames = segment.frames if isinstance(segment, Segment) else tuple(segment)
    idx = key_indices_for(len(frames), rep_index)
    return KeyFrameSet(
        rep_frame=frames[rep_index],
        rep_index=rep_index,
        keys=tuple(frames[i] for i in idx),  # type: ignore[arg-type]
        key_indices=idx,
    )


def _from_indices(frames, rep_index, indices, scores) -> KeyFrameSet:
    return KeyFrameSet(
        rep_frame=frames[rep_index],
        rep_index=rep_index,
        keys=tuple(frames[i] for i in indices),  # type: ignore[arg-type]
        key_indices=tuple(indices),  # type: ignore[arg-type]
        scores=scores,
    )


def choose_key_frames(
    segment: Segment,
    query: TextQuery | str,
    gateway: EmbeddingGateway,
    strategy: KeyFrameStrategy = KeyFrameStrategy.CLIP_THEN_GROUP,
    rng: np.random.Generator | None = None,
) -> KeyFrameSet:
    """Run one of the key-frame strategies on a segment.

    ``RANDOM`` and the grouping-first variant exist for ablations; only the
    default keeps the fixed N/4 spacing between key frames.
    """
    frames = segment.frames
    n = len(frames)
    if n < 4 or n % 4:
        raise ValueError(f"segment length must be a positive multiple of 4, got {n}")
    strategy = KeyFrameStrategy(strategy)

    if strategy is KeyFrameStrategy.RANDOM:
        rng = rng if rng is not None else np.random.default_rng(0)
        picks = sorted(int(i) for i in rng.choice(n, size=4, replace=False))
        rep = picks[int(rng.integers(4))]
        return _from_indices(frames, rep, picks, None)

    rep, scores = select_representative(frames, query, gateway)
    if strategy is KeyFrameStrategy.CLIP_THEN_GROUP:
        ks = select_key_frames(frames, rep)
        return _from_indices(frames, rep, ks.key_indices, scores)
    if strategy is KeyFrameStrategy.CLIP:
        # stable sort keeps the lowest index first among equal scores
        top = np.argsort(-scores, kind="stable")[:4]
        return _from_indices(frames, rep, sorted(int(i) for i in top), scores)
    # GROUP_THEN_CLIP: best frame inside each quarter
    group = n // 4
    picks = [g * group + first_argmax(scores[g * group : (g + 1) * group]) for g in range(4)]
    return _from_indices(frames, rep, picks, scores)
