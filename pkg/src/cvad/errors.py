"""Exception hierarchy shared by all pipeline stages."""


class CvadError(Exception):
    """Base class for every error raised by this package."""


class DataError(CvadError):
    """Bad or missing input data (frames, manifests, labels)."""


class ConfigError(CvadError):
    """Invalid configuration values."""


class BackendError(CvadError):
    """A remote model backend failed; retryable errors subclass this."""


class TransportError(BackendError):
    """Backend unreachable or timed out after all retries."""


class ScoreParseError(CvadError):
    """No score in [0, 1] could be found in a model response."""


class UndefinedMetricError(CvadError):
    """Metric is undefined for the given labels (e.g. only one class)."""


class ImageTooLargeError(BackendError):
    """Image exceeds the configured backend size limit."""
