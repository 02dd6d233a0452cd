"""Exception hierarchy shared by all modules."""


class SemgraphError(Exception):
    """Base class for every error raised by this package."""


class InputShapeError(SemgraphError, ValueError):
    pass


class FrameMisuseError(SemgraphError, ValueError):
    pass


class EmptyInputError(SemgraphError, ValueError):
    pass


class SchemaError(SemgraphError, ValueError):
    pass


class LookupFailure(SemgraphError, KeyError):
    """Unknown id in a taxonomy or world lookup."""

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class InvalidOperationError(SemgraphError, ValueError):
    pass


class KindError(SemgraphError, ValueError):
    pass


class DataMissingError(SemgraphError, FileNotFoundError):
    pass


class ParseError(SemgraphError, ValueError):
    pass


class NetworkError(SemgraphError, ConnectionError):
    """Transport-level failure talking to a remote provider; retriable."""


class ProviderError(SemgraphError):
    """Remote provider answered with a non-2xx status."""

    def __init__(self, status, message=""):
        super().__init__(f"provider returned HTTP {status}" + (f": {message}" if message else ""))
        self.status = status


class DatasetError(SemgraphError):
    pass


class FrameError(SemgraphError):
    """Wraps a failure raised while processing one frame."""

    def __init__(self, frame_id, cause):
        super().__init__(f"frame {frame_id}: {cause}")
        self.frame_id = frame_id
        self.cause = cause
