"""Frame loading and segmentation.

Videos are consumed as directories of pre-extracted frames
(``<video_id>/000000.jpg`` ...). Decoding container formats is left to an
external tool such as ``ffmpeg -i in.mp4 out/%06d.jpg``.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DataError

logger = logging.getLogger(__name__)

IMAGE_EXTENSIONS = (".jpg", ".jpeg", ".png", ".bmp", ".tif", ".tiff", ".webp")
DEFAULT_RESOLUTION = 240


@dataclass(frozen=True, eq=False)
class Frame:
    index: int
    pixels: np.ndarray  # H x W x 3, uint8
    source_id: str = ""


@dataclass
class FrameSequence:
    """Decoded frames of one video, in index order."""

    video_id: str
    frames: list[Frame]
    resolution: int = DEFAULT_RESOLUTION

    def __len__(self) -> int:
        return len(self.frames)

    def __iter__(self) -> Iterator[Frame]:
        return iter(self.frames)

    def __getitem__(self, i):
        return self.frames[i]


@dataclass(frozen=True)
class Segment:
    frames: tuple[Frame, ...]
    video_id: str
    start_index: int

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def indices(self) -> range:
        return range(self.start_index, self.start_index + len(self.frames))


@dataclass
class CoverageReport:
    """Which frames ended up in segments and which tail frames were dropped."""

    total_frames: int
    covered: int
    dropped: list[int] = field(default_factory=list)


@dataclass(frozen=True)
class VideoEntry:
    video_id: str
    path: Path
    label_path: Path | None = None
    num_frames: int | None = None

    def frame_count(self) -> int:
        return self.num_frames if self.num_frames is not None else count_frames(self.path)


def _list_images(directory: Path) -> list[Path]:
    return sorted(
        p for p in directory.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_EXTENSIONS
    )


def read_image(path: Path, resolution: int) -> np.ndarray:
    """Read one image as RGB uint8 and resize it to ``resolution`` square."""
    try:
        with Image.open(path) as im:
            im.load()
            im = im.convert("RGB")
            if im.size != (resolution, resolution):
                im = im.resize((resolution, resolution), Image.BILINEAR)
            return np.asarray(im, dtype=np.uint8).copy()
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise DataError(f"cannot decode frame {path}: {exc}") from exc


def load_frames(
    source_path: str | Path,
    working_resolution: int = DEFAULT_RESOLUTION,
    video_id: str | None = None,
) -> FrameSequence:
    """Load a frame-per-file directory into a FrameSequence.

    Files are ordered lexicographically and resized (without preserving the
    aspect ratio) to ``working_resolution`` x ``working_resolution``.

    Raises:
        DataError: if the directory is missing, holds no images, or any
            image cannot be decoded (the message names the file).
    """
    source = Path(source_path)
    if not source.is_dir():
        raise DataError(f"frame directory not found: {source}")
    paths = _list_images(source)
    if not paths:
        raise DataError(f"no frames found in {source}")
    vid = video_id or source.name
    frames = [
        Frame(index=i, pixels=read_image(p, working_resolution), source_id=vid)
        for i, p in enumerate(paths)
    ]
    logger.debug("loaded %d frames from %s", len(frames), source)
    return FrameSequence(video_id=vid, frames=frames, resolution=working_resolution)


def count_frames(source_path: str | Path) -> int:
    source = Path(source_path)
    if not source.is_dir():
        raise DataError(f"frame directory not found: {source}")
    return len(_list_images(source))


def segment_stream(
    frames: Sequence[Frame] | FrameSequence, segment_length: int
) -> tuple[list[Segment], CoverageReport]:
    """Split frames into consecutive, non-overlapping segments.

    A tail of ``r = len(frames) % segment_length`` frames becomes a shorter
    final segment truncated to a multiple of 4 when ``r >= 4``. Whatever is
    left after that (at most 3 frames) is dropped and listed in the coverage
    report so per-frame scores can still be backfilled.
    """
    n = segment_length
    if n < 4 or n % 4:
        raise ValueError(f"segment length must be a positive multiple of 4, got {n}")
    if isinstance(frames, FrameSequence):
        video_id, seq = frames.video_id, frames.frames
    else:
        seq = list(frames)
        video_id = seq[0].source_id if seq else ""

    total = len(seq)
    segments = []
    start = 0
    while start < total:
        length = min(n, total - start)
        length -= length % 4
        if length == 0:
            break
        segments.append(Segment(tuple(seq[start : start + length]), video_id, start))
        start += length
    dropped = list(range(start, total))
    if dropped:
        logger.debug("%s: dropping %d tail frames %s", video_id, len(dropped), dropped)
    return segments, CoverageReport(total_frames=total, covered=start, dropped=dropped)


def load_video_manifest(path: str | Path) -> list[VideoEntry]:
    """Read a JSON list of ``{video_id, path, label_path?, num_frames?}`` entries.

    Relative paths resolve against the manifest's directory.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read video manifest {path}: {exc}") from exc
    if isinstance(raw, dict):
        raw = raw.get("videos", [])
    base = path.parent
    entries = []
    for item in raw:
        try:
            vid = str(item["video_id"])
            vpath = base / item["path"]
        except (KeyError, TypeError) as exc:
            raise DataError(f"malformed manifest entry {item!r} in {path}") from exc
        label = item.get("label_path")
        n = item.get("num_frames")
        entries.append(VideoEntry(vid, vpath, base / label if label else None, int(n) if n is not None else None))
    return entries


def discover_videos(root: str | Path) -> list[VideoEntry]:
    """Treat ``root`` as one video if it holds images, else each subdirectory as a video."""
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"input directory not found: {root}")
    if _list_images(root):
        return [VideoEntry(root.name, root)]
    subdirs = sorted(p for p in root.iterdir() if p.is_dir())
    if not subdirs:
        raise DataError(f"no frames found in {root}")
    return [VideoEntry(p.name, p) for p in subdirs]
