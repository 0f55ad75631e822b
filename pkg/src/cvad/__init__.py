"""Zero-shot customizable video anomaly detection.

Anomalies are defined at query time by free text. Each video segment is
scored by a vision-language model on its key frame plus two generated
context images (position and temporal), and the scores are fused.
"""

__version__ = "0.1.0"

from .config import RunConfig, resolve_config
from .embedding import EmbeddingGateway, HttpEmbeddingBackend, MockEmbeddingBackend, TextQuery
from .errors import BackendError, ConfigError, CvadError, DataError, ScoreParseError, TransportError, UndefinedMetricError
from .evaluation import LabeledFrames, Report, evaluate_classes, evaluate_cvad, micro_auroc
from .media import Frame, FrameSequence, Segment, load_frames, segment_stream
from .pipeline import Detector, build_gateways, frame_only_scores
from .scoring import FusionWeights, ScoreSeries, aggregate_multi_query, expand_scores, fuse_scores, smooth
from .vqa import MockLvlmBackend, OpenAIChatBackend, VqaGateway, build_prompt, parse_score

__all__ = [
    "BackendError", "ConfigError", "CvadError", "DataError", "Detector", "EmbeddingGateway", "Frame",
    "FrameSequence", "FusionWeights", "HttpEmbeddingBackend", "LabeledFrames", "MockEmbeddingBackend",
    "MockLvlmBackend", "OpenAIChatBackend", "Report", "RunConfig", "ScoreParseError", "ScoreSeries",
    "Segment", "TextQuery", "TransportError", "UndefinedMetricError", "VqaGateway",
    "aggregate_multi_query", "build_gateways", "build_prompt", "evaluate_classes", "evaluate_cvad",
    "expand_scores", "frame_only_scores", "fuse_scores", "load_frames", "micro_auroc", "parse_score",
    "resolve_config", "segment_stream", "smooth",
]
