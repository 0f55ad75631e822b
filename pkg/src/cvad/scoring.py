"""Segment score fusion, per-frame expansion, smoothing and multi-query max."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, DataError
from .media import CoverageReport, Segment

DEFAULT_SIGMA = 10.0


@dataclass(frozen=True)
class FusionWeights:
    """Weights for the key frame, position-context and temporal-context scores."""

    frame: float = 1.0
    position: float = 1.0
    temporal: float = 1.0

    def __post_init__(self):
        w = (self.frame, self.position, self.temporal)
        if any(not math.isfinite(x) or x < 0 for x in w):
            raise ConfigError(f"fusion weights must be finite and non-negative, got {w}")
        if not any(w):
            raise ConfigError("fusion weights must not all be zero")

    @classmethod
    def parse(cls, text: str) -> "FusionWeights":
        parts = [p for p in text.replace(",", " ").split() if p]
        if len(parts) != 3:
            raise ConfigError(f"expected three weights, got {text!r}")
        return cls(*map(float, parts))

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.frame, self.position, self.temporal)


# tuned per-dataset weights; unlisted datasets use the untuned (1, 1, 1)
PROFILE_WEIGHTS = {
    "ave": FusionWeights(0.6, 0.3, 0.1),
    "sht": FusionWeights(0.5, 0.3, 0.2),
    "ub": FusionWeights(0.6, 0.1, 0.3),
    "ucf": FusionWeights(0.6, 0.1, 0.3),
}


def fuse_scores(frame: float, position: float, temporal: float, weights: FusionWeights = FusionWeights()) -> float:
    for s in (frame, position, temporal):
        if not 0.0 <= s <= 1.0:
            raise ValueError(f"VQA scores must lie in [0, 1], got {s}")
    return weights.frame * frame + weights.position * position + weights.temporal * temporal


@dataclass
class ScoreSeries:
    video_id: str
    scores: np.ndarray
    query: str = ""
    boundaries: list[tuple[int, int]] = field(default_factory=list)  # [start, end) per segment

    def __len__(self) -> int:
        return len(self.scores)


def expand_scores(
    segment_scores: Sequence[float],
    segments: Sequence[Segment],
    total_frames: int | None = None,
    coverage: CoverageReport | None = None,
    query: str = "",
) -> ScoreSeries:
    """Repeat each segment's score over its frames.

    Frames after the last segment (dropped tail frames) take the last
    segment's score so that every ingested frame is scored.
    """
    if not segments:
        raise DataError("cannot expand scores without segments")
    if len(segment_scores) != len(segments):
        raise DataError(f"{len(segment_scores)} scores for {len(segments)} segments")
    if total_frames is None:
        total_frames = coverage.total_frames if coverage else segments[-1].start_index + len(segments[-1])
    covered = segments[-1].start_index + len(segments[-1])
    if total_frames < covered or total_frames - covered > 3:
        raise DataError(f"total frame count {total_frames} inconsistent with segments covering {covered}")

    out = np.empty(total_frames, dtype=np.float64)
    bounds = []
    pos = 0
    for score, seg in zip(segment_scores, segments):
        if seg.start_index != pos:
            raise DataError(f"segments are not contiguous at frame {pos}")
        out[pos : pos + len(seg)] = score
        bounds.append((pos, pos + len(seg)))
        pos += len(seg)
    out[pos:] = segment_scores[-1]
    return ScoreSeries(segments[0].video_id, out, query, bounds)


def gaussian_kernel(sigma: float) -> np.ndarray:
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    radius = math.ceil(3 * sigma)
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_smooth(values: np.ndarray, sigma: float) -> np.ndarray:
    """1-D Gaussian filter with reflect (half-sample symmetric) padding."""
    values = np.asarray(values, dtype=np.float64)
    k = gaussian_kernel(sigma)
    r = len(k) // 2
    if values.size == 0:
        return values.copy()
    padded = np.pad(values, r, mode="symmetric")
    return np.convolve(padded, k, mode="valid")


def smooth(series: ScoreSeries, sigma: float = DEFAULT_SIGMA) -> ScoreSeries:
    return ScoreSeries(series.video_id, gaussian_smooth(series.scores, sigma), series.query, list(series.boundaries))


def aggregate_multi_query(per_query: Sequence[ScoreSeries]) -> ScoreSeries:
    """Elementwise maximum across queries for one video."""
    if not per_query:
        raise DataError("no series to aggregate")
    lengths = {len(s) for s in per_query}
    if len(lengths) != 1:
        raise DataError(f"series lengths differ: {sorted(lengths)}")
    stacked = np.stack([s.scores for s in per_query])
    first = per_query[0]
    return ScoreSeries(first.video_id, stacked.max(axis=0), "max(" + ",".join(s.query for s in per_query) + ")", list(first.boundaries))


def write_scores_jsonl(path: str | Path, rows: Iterable[tuple[ScoreSeries, ScoreSeries]]) -> None:
    """Write ``{video_id, query, frame_index, raw, smoothed}`` lines for (raw, smoothed) pairs."""
    with open(path, "w", encoding="utf-8") as fh:
        for raw, smoothed in rows:
            for i, (r, s) in enumerate(zip(raw.scores, smoothed.scores)):
                fh.write(json.dumps({"video_id": raw.video_id, "query": raw.query, "frame_index": i, "raw": float(r), "smoothed": float(s)}) + "\n")


def write_scores_csv(path: str | Path, rows: Iterable[tuple[ScoreSeries, ScoreSeries]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["video_id", "query", "frame_index", "raw", "smoothed"])
        for raw, smoothed in rows:
            for i, (r, s) in enumerate(zip(raw.scores, smoothed.scores)):
                w.writerow([raw.video_id, raw.query, i, repr(float(r)), repr(float(s))])


def read_scores_jsonl(path: str | Path, field_name: str = "smoothed") -> dict[str, dict[str, np.ndarray]]:
    """Load a score file as ``{query: {video_id: scores}}``."""
    acc: dict[str, dict[str, dict[int, float]]] = {}
    try:
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                rec = json.loads(line)
                acc.setdefault(rec["query"], {}).setdefault(rec["video_id"], {})[int(rec["frame_index"])] = float(rec[field_name])
    except (OSError, ValueError, KeyError) as exc:
        raise DataError(f"cannot read score file {path}: {exc}") from exc
    out: dict[str, dict[str, np.ndarray]] = {}
    for q, vids in acc.items():
        out[q] = {}
        for vid, frames in vids.items():
            n = max(frames) + 1
            if len(frames) != n:
                raise DataError(f"{path}: video {vid} has gaps in frame indices")
            out[q][vid] = np.array([frames[i] for i in range(n)])
    return out
