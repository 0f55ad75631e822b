"""Segment-level detection: key frames, contexts, three VQA calls, fused score.

Per query the order is fixed: fuse per segment, expand to frames, smooth,
and only then take the maximum across queries.
"""

from __future__ import annotations

import logging
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import RunConfig
from .embedding import EmbeddingGateway, HttpEmbeddingBackend, MockEmbeddingBackend, TextQuery
from .errors import ConfigError
from .keyframes import KeyFrameSet, choose_key_frames, select_representative
from .media import FrameSequence, Segment, segment_stream
from .position import dump_position_debug, position_context
from .scoring import ScoreSeries, aggregate_multi_query, expand_scores, smooth
from .temporal import dump_temporal_debug, select_temporal_context
from .vqa import GRID, PLAIN, MockLvlmBackend, OpenAIChatBackend, PromptText, VqaGateway, VqaResult, build_prompt, load_templates

logger = logging.getLogger(__name__)


@dataclass
class SegmentResult:
    segment_index: int
    start: int
    length: int
    rep_index: int
    key_indices: tuple[int, ...]
    frame: VqaResult
    position: VqaResult | None
    temporal: VqaResult | None
    ascore: float

    def to_dict(self) -> dict:
        def s(r):
            return None if r is None else {"score": r.score, "reason": r.reason, "fallback": r.fallback_used}

        return {
            "segment": self.segment_index,
            "start": self.start,
            "length": self.length,
            "rep_index": self.rep_index,
            "key_indices": list(self.key_indices),
            "frame": s(self.frame),
            "position": s(self.position),
            "temporal": s(self.temporal),
            "ascore": self.ascore,
        }


@dataclass
class QueryResult:
    query: str
    segments: list[SegmentResult]
    raw: ScoreSeries
    smoothed: ScoreSeries


@dataclass
class VideoResult:
    video_id: str
    total_frames: int
    dropped: list[int]
    per_query: list[QueryResult] = field(default_factory=list)
    aggregate_raw: ScoreSeries | None = None
    aggregate: ScoreSeries | None = None


def split_queries(texts: Sequence[str]) -> list[str]:
    """Flatten comma-separated query lists; each keyword is scored on its own."""
    out = []
    for t in texts:
        for part in t.split(","):
            part = part.strip()
            if part and part not in out:
                out.append(part)
    if not out:
        raise ConfigError("at least one non-empty query is required")
    return out


def build_gateways(config: RunConfig) -> tuple[EmbeddingGateway, VqaGateway]:
    """Create the embedding and VQA gateways described by ``config``."""
    if config.mock:
        embed_backend = MockEmbeddingBackend(dim=config.embed_dim, seed=config.seed)
        lvlm_backend = MockLvlmBackend(seed=config.seed)
    else:
        if not config.embed_url or not config.lvlm_url:
            raise ConfigError("embed_url and lvlm_url are required unless mock backends are selected")
        embed_backend = HttpEmbeddingBackend(config.embed_url, timeout=config.timeout, retries=config.retries)
        lvlm_backend = OpenAIChatBackend(config.lvlm_url, config.lvlm_model, api_key=config.api_key, timeout=config.timeout)
    embed = EmbeddingGateway(embed_backend, dim=config.embed_dim)
    audit = Path(config.output_dir) / "audit.jsonl"
    vqa = VqaGateway(
        lvlm_backend,
        retries=config.retries,
        fallback_score=config.fallback_score,
        max_in_flight=config.max_in_flight,
        audit_path=audit,
    )
    return embed, vqa


class Detector:
    """Runs the context-aware VQA pipeline over videos.

    Args:
        config: validated run configuration.
        embed: embedding gateway used for key frames and contexts.
        vqa: gateway to the vision-language model.
    """

    def __init__(self, config: RunConfig, embed: EmbeddingGateway, vqa: VqaGateway):
        self.config = config.validate()
        self.embed = embed
        self.vqa = vqa
        self.templates = load_templates(config.prompt_dir)
        w = config.weights
        if not config.use_position and w.position:
            logger.warning("position context disabled; its weight %.2f contributes nothing", w.position)
        if not config.use_temporal and w.temporal:
            logger.warning("temporal context disabled; its weight %.2f contributes nothing", w.temporal)

    def prompts(self, query: str) -> tuple[PromptText, PromptText]:
        opts = dict(reasoning=self.config.reasoning, consideration=self.config.consideration, templates=self.templates)
        return build_prompt(query, PLAIN, **opts), build_prompt(query, GRID, **opts)

    def _submit_segment(self, pool: ThreadPoolExecutor, seg_idx: int, segment: Segment, query: str, prompts, rng, video_id: str):
        cfg = self.config
        plain_q = TextQuery.plain(query)
        ks: KeyFrameSet = choose_key_frames(segment, plain_q, self.embed, cfg.strategy, rng)
        tag = f"{video_id}:{query}:{seg_idx}"
        futures: dict[str, Future] = {"frame": pool.submit(self.vqa.ask, ks.rep_frame.pixels, prompts[0], tag + ":frame")}
        if cfg.use_position:
            pc = position_context(ks.rep_frame.pixels, TextQuery.build(query, cfg.text_templates), self.embed, cfg.scales)
            futures["position"] = pool.submit(self.vqa.ask, pc.image, prompts[0], tag + ":position")
            if cfg.debug_dir:
                dump_position_debug(Path(cfg.debug_dir) / video_id / query, pc, prefix=f"seg{seg_idx:05d}_")
        if cfg.use_temporal:
            tc = select_temporal_context(ks.keys, plain_q, self.embed, cfg.scales)
            futures["temporal"] = pool.submit(self.vqa.ask, tc.grid.pixels, prompts[1], tag + ":temporal")
            if cfg.debug_dir:
                dump_temporal_debug(Path(cfg.debug_dir) / video_id / query, tc, prefix=f"seg{seg_idx:05d}_")
        return ks, futures

    def _finish_segment(self, seg_idx: int, segment: Segment, ks: KeyFrameSet, futures: dict[str, Future]) -> SegmentResult:
        w = self.config.weights
        frame = futures["frame"].result()
        pos = futures["position"].result() if "position" in futures else None
        tmp = futures["temporal"].result() if "temporal" in futures else None
        ascore = w.frame * frame.score
        if pos is not None:
            ascore += w.position * pos.score
        if tmp is not None:
            ascore += w.temporal * tmp.score
        return SegmentResult(seg_idx, segment.start_index, len(segment), ks.rep_index, ks.key_indices, frame, pos, tmp, ascore)

    def score_segments(self, segments: Sequence[Segment], query: str, video_id: str = "") -> list[SegmentResult]:
        """Score every segment for one query; results come back in segment order."""
        prompts = self.prompts(query)
        rng = np.random.default_rng(self.config.seed)
        window = 4 * self.config.max_in_flight
        pending: list[tuple[int, Segment, KeyFrameSet, dict]] = []
        results: list[SegmentResult] = []
        with ThreadPoolExecutor(max_workers=self.config.max_in_flight) as pool:
            for i, seg in enumerate(segments):
                ks, futures = self._submit_segment(pool, i, seg, query, prompts, rng, video_id)
                pending.append((i, seg, ks, futures))
                if len(pending) >= window:
                    results.append(self._finish_segment(*pending.pop(0)))
            while pending:
                results.append(self._finish_segment(*pending.pop(0)))
        return results

    def detect(self, frames: FrameSequence, queries: Sequence[str]) -> VideoResult:
        cfg = self.config
        segments, coverage = segment_stream(frames, cfg.segment_length)
        if not segments:
            raise ConfigError(f"video {frames.video_id!r} has only {len(frames)} frames; at least 4 are needed")
        out = VideoResult(frames.video_id, coverage.total_frames, coverage.dropped)
        for q in queries:
            seg_results = self.score_segments(segments, q, frames.video_id)
            raw = expand_scores([r.ascore for r in seg_results], segments, coverage.total_frames, query=q)
            out.per_query.append(QueryResult(q, seg_results, raw, smooth(raw, cfg.sigma)))
        out.aggregate_raw = aggregate_multi_query([r.raw for r in out.per_query])
        out.aggregate = aggregate_multi_query([r.smoothed for r in out.per_query])
        return out


def frame_only_scores(
    frames: FrameSequence,
    query: str,
    embed: EmbeddingGateway,
    vqa: VqaGateway,
    segment_length: int,
    sigma: float,
    reasoning: bool = True,
    consideration: bool = True,
    prompt_dir: str | None = None,
) -> ScoreSeries:
    """Frame-only path: one VQA call on each segment's representative frame.

    Kept deliberately separate from :class:`Detector` so the two can be
    checked against each other.
    """
    segments, coverage = segment_stream(frames, segment_length)
    prompt = build_prompt(query, PLAIN, reasoning, consideration, load_templates(prompt_dir))
    seg_scores = []
    for seg in segments:
        rep, _ = select_representative(seg, TextQuery.plain(query), embed)
        seg_scores.append(vqa.ask(seg.frames[rep].pixels, prompt).score)
    raw = expand_scores(seg_scores, segments, coverage.total_frames, query=query)
    return smooth(raw, sigma)


def per_frame_baseline(frames: FrameSequence, query: str, vqa: VqaGateway, sigma: float, prompt_dir: str | None = None) -> ScoreSeries:
    """Score every frame independently with the plain prompt (no segments, no contexts)."""
    prompt = build_prompt(query, PLAIN, templates=load_templates(prompt_dir))
    raw = np.array([vqa.ask(f.pixels, prompt).score for f in frames])
    return smooth(ScoreSeries(frames.video_id, raw, query), sigma)
