"""Frame-level micro AUROC and per-class C-VAD reports."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import DataError, UndefinedMetricError

CATEGORY_ORDER = ("action", "appearance")


@dataclass
class LabeledFrames:
    scores: np.ndarray
    labels: np.ndarray
    provenance: list[tuple[str, str]] = field(default_factory=list)  # (video_id, class)

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.labels = np.asarray(self.labels)
        if self.scores.shape != self.labels.shape or self.scores.ndim != 1:
            raise DataError(f"scores {self.scores.shape} and labels {self.labels.shape} must be equal-length 1-D arrays")
        if not np.isin(self.labels, (0, 1)).all():
            raise DataError("labels must be 0 or 1")
        self.labels = self.labels.astype(np.int8)

    @classmethod
    def concat(cls, parts: Sequence["LabeledFrames"]) -> "LabeledFrames":
        if not parts:
            raise DataError("nothing to concatenate")
        return cls(
            np.concatenate([p.scores for p in parts]),
            np.concatenate([p.labels for p in parts]),
            [x for p in parts for x in p.provenance],
        )


def micro_auroc(labeled: LabeledFrames | None = None, *, scores=None, labels=None) -> float:
    """Area under the ROC curve over pooled frames.

    Uses the rank-sum (Mann-Whitney) form with average ranks, which equals
    the fraction of (positive, negative) pairs ordered correctly with ties
    counted as one half.
    """
    if labeled is None:
        labeled = LabeledFrames(scores, labels)
    y = labeled.labels.astype(bool)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError(f"AUROC undefined with {n_pos} positive and {n_neg} negative frames")
    ranks = rankdata(labeled.scores, method="average")
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


@dataclass
class ClassResult:
    name: str
    category: str
    auroc: float
    n_pos: int
    n_neg: int


@dataclass
class Report:
    classes: list[ClassResult]
    category_avg: dict[str, float]
    overall: float

    def to_dict(self) -> dict:
        return {"classes": [asdict(c) for c in self.classes], "category_avg": dict(self.category_avg), "overall": self.overall}

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    def format_table(self) -> str:
        lines = [f"{'Category':<12} {'Class':<20} {'AUROC':>7} {'#pos':>8} {'#neg':>8}", "-" * 59]
        for cat in _category_order(self.classes):
            members = [c for c in self.classes if c.category == cat]
            for c in members:
                lines.append(f"{cat:<12} {c.name:<20} {100 * c.auroc:7.2f} {c.n_pos:8d} {c.n_neg:8d}")
            if cat in self.category_avg:
                lines.append(f"{cat:<12} {'Average':<20} {100 * self.category_avg[cat]:7.2f}")
            lines.append("-" * 59)
        lines.append(f"{'Overall Average':<33} {100 * self.overall:7.2f}")
        return "\n".join(lines)


def _category_order(classes: Sequence[ClassResult]) -> list[str]:
    cats = {c.category for c in classes}
    return [c for c in CATEGORY_ORDER if c in cats] + sorted(cats - set(CATEGORY_ORDER))


def evaluate_classes(per_class: Mapping[str, LabeledFrames], categories: Mapping[str, str] | None = None) -> Report:
    """Per-class AUROC, per-category means and the overall mean over classes.

    Classes are reported sorted by (category, name) so the input order never
    changes the report.
    """
    if not per_class:
        raise DataError("no classes to evaluate")
    categories = categories or {}
    results = []
    for name, lf in per_class.items():
        n_pos = int(lf.labels.sum())
        results.append(ClassResult(name, categories.get(name, "uncategorized"), micro_auroc(lf), n_pos, int(lf.labels.size - n_pos)))
    order = {c: i for i, c in enumerate(_category_order(results))}
    results.sort(key=lambda c: (order[c.category], c.name))
    cat_avg = {}
    for cat in order:
        vals = [c.auroc for c in results if c.category == cat]
        if vals:
            cat_avg[cat] = float(np.mean(vals))
    overall = float(np.mean([c.auroc for c in results]))
    return Report(results, cat_avg, overall)


def pool_scores(
    video_scores: Mapping[str, np.ndarray],
    video_labels: Mapping[str, np.ndarray],
    video_order: Sequence[str],
    class_name: str = "",
) -> LabeledFrames:
    """Concatenate per-video scores and labels in ``video_order``."""
    parts = []
    for vid in video_order:
        if vid not in video_scores:
            raise DataError(f"no scores for video {vid!r}" + (f" (class {class_name!r})" if class_name else ""))
        s = np.asarray(video_scores[vid])
        y = np.asarray(video_labels[vid])
        if s.shape != y.shape:
            raise DataError(f"video {vid!r}: {s.size} scores vs {y.size} labels")
        parts.append(LabeledFrames(s, y, [(vid, class_name)] * s.size))
    return LabeledFrames.concat(parts)


def evaluate_cvad(run_results: Mapping[str, Mapping[str, np.ndarray]], dataset, root=None) -> Report:
    """Score a C-VAD run against a :class:`~cvad.dataset.CvadManifest`.

    ``run_results`` maps class name (the query used) to per-video scores.
    Every class in the manifest must be present.
    """
    from .dataset import load_video_labels

    missing = [c.name for c in dataset.classes if c.name not in run_results]
    if missing:
        raise DataError(f"no scores for classes: {', '.join(missing)}")
    per_class = {}
    for cls in dataset.classes:
        labels = load_video_labels(dataset, cls.name, root=root)
        per_class[cls.name] = pool_scores(run_results[cls.name], labels, dataset.videos, cls.name)
    return evaluate_classes(per_class, {c.name: c.category for c in dataset.classes})
