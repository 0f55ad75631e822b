"""Command-line entry point: ``cvad detect | evaluate | build-cvad | plot``.

Exit codes: 0 success, 1 usage/config error, 2 backend failure, 3 data error.
"""

from __future__ import annotations

import argparse
import json
import logging
import re
import sys
import traceback
from pathlib import Path

import numpy as np

from . import __version__
from .config import PROFILES, resolve_config
from .dataset import build_cvad, load_annotations, load_cvad, read_label_file, save_cvad
from .errors import BackendError, ConfigError, CvadError, DataError, UndefinedMetricError
from .evaluation import evaluate_cvad, micro_auroc, pool_scores
from .keyframes import KeyFrameStrategy
from .media import discover_videos, load_frames, load_video_manifest
from .pipeline import Detector, build_gateways, split_queries
from .scoring import read_scores_jsonl, write_scores_csv, write_scores_jsonl

logger = logging.getLogger("cvad")

EXIT_OK, EXIT_USAGE, EXIT_BACKEND, EXIT_DATA = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", text).strip("_") or "query"


def cmd_detect(args) -> int:
    overrides = {
        "segment_length": args.segment,
        "profile": args.profile,
        "weights": args.weights,
        "scales": args.scales,
        "sigma": args.sigma,
        "strategy": args.strategy,
        "lvlm_url": args.backend,
        "lvlm_model": args.model,
        "embed_url": args.embed_url,
        "mock": True if args.mock else None,
        "max_in_flight": args.max_in_flight,
        "retries": args.retries,
        "timeout": args.timeout,
        "fallback_score": args.fallback_score,
        "use_position": False if args.no_position else None,
        "use_temporal": False if args.no_temporal else None,
        "reasoning": False if args.no_reasoning else None,
        "consideration": False if args.no_consideration else None,
        "prompt_dir": args.prompt_dir,
        "output_dir": args.output,
        "debug_dir": args.debug_dir,
        "seed": args.seed,
        "resolution": args.resolution,
    }
    config = resolve_config(overrides, args.config)
    return run_detect(config, args.input, args.manifest, args.query)


def run_detect(config, input_dir=None, manifest=None, queries=()) -> int:
    """Detect over every video and write score files; returns the exit code."""
    queries = split_queries(queries)
    if manifest:
        videos = load_video_manifest(manifest)
    elif input_dir:
        videos = discover_videos(input_dir)
    else:
        raise ConfigError("either --input or --manifest is required")

    out = Path(config.output_dir)
    (out / "scores").mkdir(parents=True, exist_ok=True)
    audit = out / "audit.jsonl"
    if audit.exists():
        audit.unlink()
    embed, vqa = build_gateways(config)
    detector = Detector(config, embed, vqa)

    results = []
    for entry in videos:
        frames = load_frames(entry.path, config.resolution, entry.video_id)
        logger.info("%s: %d frames, queries %s", entry.video_id, len(frames), queries)
        results.append(detector.detect(frames, queries))

    for qi, q in enumerate(queries):
        rows = [(r.per_query[qi].raw, r.per_query[qi].smoothed) for r in results]
        write_scores_jsonl(out / "scores" / f"{slug(q)}.jsonl", rows)
        write_scores_csv(out / "scores" / f"{slug(q)}.csv", rows)
    agg_rows = [(r.aggregate_raw, r.aggregate) for r in results]
    write_scores_jsonl(out / "scores" / "aggregate.jsonl", agg_rows)
    write_scores_csv(out / "scores" / "aggregate.csv", agg_rows)

    with open(out / "segments.jsonl", "w", encoding="utf-8") as fh:
        for r in results:
            for qr in r.per_query:
                for s in qr.segments:
                    fh.write(json.dumps({"video_id": r.video_id, "query": qr.query, **s.to_dict()}) + "\n")
    summary = {
        "version": __version__,
        "config": config.to_dict(),
        "queries": queries,
        "videos": [{"video_id": r.video_id, "frames": r.total_frames, "dropped": r.dropped} for r in results],
        "vqa_calls": vqa.calls,
    }
    (out / "run.json").write_text(json.dumps(summary, indent=2))
    print(f"scored {len(results)} video(s) x {len(queries)} query(ies); {vqa.calls} VQA calls; output in {out}")
    return EXIT_OK


def _merge_score_files(paths, field_name):
    merged: dict[str, dict[str, np.ndarray]] = {}
    for p in paths:
        for q, vids in read_scores_jsonl(p, field_name).items():
            merged.setdefault(q, {}).update(vids)
    return merged


def cmd_evaluate(args) -> int:
    scores = _merge_score_files(args.scores, args.field)
    raw = json.loads(Path(args.manifest).read_text())
    if isinstance(raw, dict) and "classes" in raw:
        dataset = load_cvad(args.manifest)
        report = evaluate_cvad(scores, dataset)
        print(report.format_table())
        payload = report.to_dict()
    else:
        entries = load_video_manifest(args.manifest)
        per_video: dict[str, np.ndarray] = {}
        for vids in scores.values():
            for vid, s in vids.items():
                per_video[vid] = s if vid not in per_video else np.maximum(per_video[vid], s)
        labels = {}
        for e in entries:
            if e.label_path is None:
                raise DataError(f"video {e.video_id!r} has no label_path in {args.manifest}")
            labels[e.video_id] = read_label_file(e.label_path)
        pooled = pool_scores(per_video, labels, [e.video_id for e in entries])
        auc = micro_auroc(pooled)
        n_pos = int(pooled.labels.sum())
        payload = {"overall": auc, "n_pos": n_pos, "n_neg": int(pooled.labels.size - n_pos)}
        print(f"micro AUROC: {100 * auc:.2f}  ({n_pos} anomalous / {pooled.labels.size} frames)")
    if args.json:
        Path(args.json).write_text(json.dumps(payload, indent=2))
    return EXIT_OK


def cmd_build_cvad(args) -> int:
    entries = load_video_manifest(args.manifest)
    counts = {e.video_id: e.frame_count() for e in entries}
    annotations = load_annotations(args.annotations)
    categories = json.loads(Path(args.categories).read_text()) if args.categories else None
    manifest = build_cvad(counts, annotations, categories, args.classes, source=args.source or Path(args.manifest).stem)
    path = save_cvad(manifest, args.output)
    for c in manifest.classes:
        print(f"{c.name:<20} {c.category:<12} positive {len(c.positive_videos):4d}  negative {len(c.negative_videos):4d}")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_plot(args) -> int:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    raw = read_scores_jsonl(args.scores, "raw")
    smoothed = read_scores_jsonl(args.scores, "smoothed")
    query = args.query or next(iter(smoothed))
    if query not in smoothed:
        raise DataError(f"query {query!r} not in {args.scores}")
    vids = smoothed[query]
    vid = args.video or next(iter(vids))
    if vid not in vids:
        raise DataError(f"video {vid!r} not in {args.scores}")
    s = vids[vid]

    fig, ax = plt.subplots(figsize=(10, 3))
    if args.labels:
        lab = read_label_file(args.labels)
        if lab.size != s.size:
            raise DataError(f"{lab.size} labels for {s.size} scored frames")
        edges = np.flatnonzero(np.diff(np.concatenate([[0], lab, [0]])))
        for start, end in zip(edges[::2], edges[1::2]):
            ax.axvspan(start - 0.5, end - 0.5, color="tab:red", alpha=0.2, lw=0)
    ax.plot(raw[query][vid], color="0.6", lw=0.8, label="raw")
    ax.plot(s, color="tab:blue", lw=1.5, label="smoothed")
    ax.set_ylim(-0.02, max(1.02, float(s.max()) * 1.05))
    ax.set_xlim(0, s.size - 1)
    ax.set_xlabel("frame")
    ax.set_ylabel("anomaly score")
    ax.set_title(f"{vid} - {query}")
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(args.output, dpi=120)
    plt.close(fig)
    print(f"wrote {args.output}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cvad", description="Zero-shot customizable video anomaly detection.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    d = sub.add_parser("detect", help="score videos against user-defined anomaly text")
    src = d.add_mutually_exclusive_group(required=True)
    src.add_argument("--input", help="frame directory of one video, or a directory of per-video frame directories")
    src.add_argument("--manifest", help="JSON video manifest")
    d.add_argument("--query", nargs="+", required=True, help="anomaly text; several values or comma lists are scored separately")
    d.add_argument("--config", help="YAML/JSON config file")
    d.add_argument("--segment", type=int, help="segment length (multiple of 4, default 24)")
    d.add_argument("--profile", choices=sorted(PROFILES), help="dataset profile for weights and window scales")
    d.add_argument("--weights", help="fusion weights 'frame,position,temporal'")
    d.add_argument("--scales", help="window sides, e.g. '48,80,120'")
    d.add_argument("--sigma", type=float, help="Gaussian smoothing sigma in frames")
    d.add_argument("--strategy", choices=[s.value for s in KeyFrameStrategy])
    d.add_argument("--backend", help="OpenAI-compatible LVLM base URL (e.g. http://host:8000/v1)")
    d.add_argument("--model", help="LVLM model name")
    d.add_argument("--embed-url", help="embedding service URL")
    d.add_argument("--mock", action="store_true", help="use deterministic mock backends")
    d.add_argument("--max-in-flight", type=int)
    d.add_argument("--retries", type=int)
    d.add_argument("--timeout", type=float)
    d.add_argument("--fallback-score", type=float)
    d.add_argument("--no-position", action="store_true", help="skip the position context")
    d.add_argument("--no-temporal", action="store_true", help="skip the temporal context")
    d.add_argument("--no-reasoning", action="store_true")
    d.add_argument("--no-consideration", action="store_true")
    d.add_argument("--prompt-dir", help="directory with prompt template overrides")
    d.add_argument("--resolution", type=int)
    d.add_argument("--seed", type=int)
    d.add_argument("--debug-dir", help="dump context images here")
    d.add_argument("-o", "--output", help="output directory")
    d.set_defaults(func=cmd_detect)

    e = sub.add_parser("evaluate", help="micro AUROC against a C-VAD or VAD manifest")
    e.add_argument("--scores", nargs="+", required=True, help="score JSONL files written by detect")
    e.add_argument("--manifest", required=True, help="C-VAD manifest.json or video manifest with label_path")
    e.add_argument("--field", choices=("smoothed", "raw"), default="smoothed")
    e.add_argument("--json", help="write the report as JSON here")
    e.set_defaults(func=cmd_evaluate)

    b = sub.add_parser("build-cvad", help="build a per-class C-VAD dataset from frame annotations")
    b.add_argument("--annotations", required=True)
    b.add_argument("--manifest", required=True, help="video manifest of the test set")
    b.add_argument("--categories", help="JSON {class: category}")
    b.add_argument("--classes", nargs="+")
    b.add_argument("--source")
    b.add_argument("-o", "--output", required=True)
    b.set_defaults(func=cmd_build_cvad)

    pl = sub.add_parser("plot", help="plot a per-frame score curve")
    pl.add_argument("--scores", required=True)
    pl.add_argument("--video")
    pl.add_argument("--query")
    pl.add_argument("--labels", help="frame label file for anomaly shading")
    pl.add_argument("-o", "--output", required=True)
    pl.set_defaults(func=cmd_plot)
    return p


def _origin(exc: BaseException) -> str:
    for frame in reversed(traceback.extract_tb(exc.__traceback__)):
        path = Path(frame.filename)
        if path.parent.name == "cvad":
            return path.stem
    return "cvad"


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error [{_origin(exc)}]: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BackendError as exc:
        print(f"backend error [{_origin(exc)}]: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except (DataError, UndefinedMetricError) as exc:
        print(f"data error [{_origin(exc)}]: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (CvadError, ValueError) as exc:
        print(f"error [{_origin(exc)}]: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
