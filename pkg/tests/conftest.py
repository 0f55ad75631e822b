import numpy as np
import pytest
from PIL import Image

from cvad.embedding import EmbeddingGateway, MockEmbeddingBackend
from cvad.media import Frame, FrameSequence
from cvad.vqa import MockLvlmBackend, VqaGateway


def make_frames(n, size=240, seed=0, video_id="vid"):
    """Blocky random frames: cheap to make, and windows differ from one another."""
    rng = np.random.default_rng(seed)
    frames = []
    for i in range(n):
        coarse = rng.integers(0, 256, (size // 8 or 1, size // 8 or 1, 3), dtype=np.uint8)
        pixels = np.kron(coarse, np.ones((8, 8, 1), dtype=np.uint8))[:size, :size]
        frames.append(Frame(i, np.ascontiguousarray(pixels), video_id))
    return FrameSequence(video_id, frames, size)


def write_frames(directory, n, size=(64, 48), seed=0, ext="png"):
    directory.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    for i in range(n):
        arr = rng.integers(0, 256, (size[1], size[0], 3), dtype=np.uint8)
        Image.fromarray(arr).save(directory / f"{i:06d}.{ext}")
    return directory


@pytest.fixture
def backend():
    return MockEmbeddingBackend(dim=512, seed=0)


@pytest.fixture
def gateway(backend):
    return EmbeddingGateway(backend, dim=512, max_workers=1)


@pytest.fixture
def lvlm():
    return MockLvlmBackend()


@pytest.fixture
def vqa(lvlm):
    return VqaGateway(lvlm, max_in_flight=3)


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
