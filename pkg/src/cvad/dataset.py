"""Build customizable (per-class) VAD datasets from frame-annotated test sets.

For each anomaly class, a test video is positive if any of its frames carries
that class and negative otherwise. Frame labels are 1 only on the frames of
a positive video where the class occurs.

Annotation input format::

    {"video_id": [{"class": "bicycle", "start_frame": 10, "end_frame": 42}, ...], ...}

Frame ranges are inclusive.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import DataError
from .evaluation import LabeledFrames


@dataclass
class CvadClass:
    name: str
    category: str
    positive_videos: list[str]
    negative_videos: list[str]
    frame_label_paths: dict[str, str] = field(default_factory=dict)
    labels: dict[str, np.ndarray] = field(default_factory=dict, repr=False)


@dataclass
class CvadManifest:
    source: str
    videos: list[str]  # every test video, in source order
    classes: list[CvadClass]

    def get(self, name: str) -> CvadClass:
        for c in self.classes:
            if c.name == name:
                return c
        raise DataError(f"class {name!r} not in manifest")

    def to_dict(self) -> dict:
        return {
            "source": self.source,
            "videos": list(self.videos),
            "classes": [
                {
                    "name": c.name,
                    "category": c.category,
                    "positive_videos": c.positive_videos,
                    "negative_videos": c.negative_videos,
                    "frame_label_paths": c.frame_label_paths,
                }
                for c in self.classes
            ],
        }


def load_annotations(path: str | Path) -> dict[str, list[dict]]:
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read annotations {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise DataError(f"{path}: annotations must map video ids to event lists")
    for vid, events in raw.items():
        for ev in events:
            if not {"class", "start_frame", "end_frame"} <= set(ev):
                raise DataError(f"{path}: malformed event for video {vid!r}: {ev!r}")
    return raw


def build_cvad(
    frame_counts: Mapping[str, int],
    annotations: Mapping[str, Sequence[Mapping]],
    categories: Mapping[str, str] | None = None,
    classes: Sequence[str] | None = None,
    source: str = "",
) -> CvadManifest:
    """Partition the test videos per class and build frame labels.

    Args:
        frame_counts: ``{video_id: number of frames}`` for every test video,
            in source order.
        annotations: per-video event lists (see module docstring).
        categories: optional ``{class: "action" | "appearance" | ...}``.
        classes: classes to build; defaults to the categories' keys, else
            every class found in the annotations. A requested class with no
            annotated frames is an error.
    """
    videos = list(frame_counts)
    unknown = sorted(set(annotations) - set(videos))
    if unknown:
        raise DataError(f"annotations reference videos not in the manifest: {unknown}")

    per_class: dict[str, dict[str, np.ndarray]] = {}
    for vid, events in annotations.items():
        n = int(frame_counts[vid])
        for ev in events:
            start, end = int(ev["start_frame"]), int(ev["end_frame"])
            if not 0 <= start <= end < n:
                raise DataError(f"video {vid!r}: frames {start}-{end} outside [0, {n})")
            mask = per_class.setdefault(str(ev["class"]), {}).setdefault(vid, np.zeros(n, dtype=np.uint8))
            mask[start : end + 1] = 1

    categories = dict(categories or {})
    if classes is None:
        classes = list(categories) if categories else sorted(per_class)
    out = []
    for name in classes:
        hits = per_class.get(name, {})
        if not any(m.any() for m in hits.values()):
            raise DataError(f"empty class {name!r}: no annotated frames in any video")
        labels = {vid: hits.get(vid, np.zeros(int(frame_counts[vid]), dtype=np.uint8)) for vid in videos}
        positives = [v for v in videos if labels[v].any()]
        negatives = [v for v in videos if not labels[v].any()]
        out.append(CvadClass(name, categories.get(name, "uncategorized"), positives, negatives, {}, labels))
    return CvadManifest(source, videos, out)


def _slug(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", name).strip("_") or "class"


def save_cvad(manifest: CvadManifest, out_dir: str | Path) -> Path:
    """Write ``manifest.json`` plus one ``.npy`` label array per video per class."""
    out = Path(out_dir)
    for cls in manifest.classes:
        cdir = out / "labels" / _slug(cls.name)
        cdir.mkdir(parents=True, exist_ok=True)
        for vid, lab in cls.labels.items():
            p = cdir / f"{_slug(vid)}.npy"
            np.save(p, lab.astype(np.uint8))
            cls.frame_label_paths[vid] = str(p.relative_to(out))
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest.to_dict(), indent=2))
    return path


def load_cvad(path: str | Path) -> CvadManifest:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
        classes = [
            CvadClass(c["name"], c.get("category", "uncategorized"), list(c["positive_videos"]), list(c["negative_videos"]), dict(c.get("frame_label_paths", {})))
            for c in raw["classes"]
        ]
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise DataError(f"cannot read C-VAD manifest {path}: {exc}") from exc
    videos = raw.get("videos") or list(dict.fromkeys(v for c in classes for v in c.positive_videos + c.negative_videos))
    m = CvadManifest(raw.get("source", ""), videos, classes)
    m.root = path.parent  # type: ignore[attr-defined]
    return m


def read_label_file(path: str | Path) -> np.ndarray:
    """Read a binary frame-label array from ``.npy`` or whitespace-separated text."""
    path = Path(path)
    try:
        if path.suffix == ".npy":
            arr = np.load(path)
        else:
            arr = np.array(path.read_text().split(), dtype=np.float64)
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read labels {path}: {exc}") from exc
    arr = np.asarray(arr).ravel()
    if not np.isin(arr, (0, 1)).all():
        raise DataError(f"{path}: labels must be 0/1")
    return arr.astype(np.uint8)


def load_video_labels(manifest: CvadManifest, class_name: str, root: str | Path | None = None) -> dict[str, np.ndarray]:
    """Per-video label arrays for one class, keyed in manifest video order."""
    cls = manifest.get(class_name)
    root = Path(root) if root is not None else getattr(manifest, "root", Path("."))
    out = {}
    for vid in manifest.videos:
        if vid in cls.labels:
            out[vid] = cls.labels[vid]
        elif vid in cls.frame_label_paths:
            out[vid] = read_label_file(root / cls.frame_label_paths[vid])
        else:
            raise DataError(f"class {class_name!r}: no labels for video {vid!r}")
    return out


def load_labels(
    manifest: CvadManifest,
    class_name: str,
    root: str | Path | None = None,
    frame_counts: Mapping[str, int] | None = None,
) -> LabeledFrames:
    """Concatenated labels for one class with zero placeholder scores.

    If ``frame_counts`` is given, each video's label length must match its
    ingested frame count.
    """
    per_video = load_video_labels(manifest, class_name, root)
    if frame_counts is not None:
        for vid, lab in per_video.items():
            if vid in frame_counts and int(frame_counts[vid]) != lab.size:
                raise DataError(f"video {vid!r}: {lab.size} labels but {frame_counts[vid]} frames")
    labels = np.concatenate(list(per_video.values()))
    prov = [(vid, class_name) for vid, lab in per_video.items() for _ in range(lab.size)]
    return LabeledFrames(np.zeros(labels.size), labels, prov)
