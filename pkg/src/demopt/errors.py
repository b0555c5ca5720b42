"""Exception hierarchy shared across the package."""


class DemoError(Exception):
    """Base class for all package-specific errors."""


class ShapeMismatchError(DemoError):
    """Tensor shape does not match the expected geometry."""


class NonDivisibleError(DemoError):
    """A chunk edge does not divide the corresponding tensor edge."""


class InvalidKError(DemoError):
    """Requested top-k is outside [1, chunk volume]."""


class GeometryMismatchError(DemoError):
    """Compressed components from different workers disagree on geometry."""


class KMismatchError(DemoError):
    """Compressed components from different workers disagree on k."""


class ConfigError(DemoError):
    """Invalid run configuration.

    ``line`` is the 1-based line number in the config file (0 for errors
    that have no file location, e.g. bad --set overrides).
    """

    def __init__(self, message: str, line: int = 0):
        self.line = line
        if line:
            message = f"line {line}: {message}"
        super().__init__(message)


class TransportError(DemoError):
    """Base class for collective-communication failures."""


class PeerDisconnectedError(TransportError):
    """A peer closed its connection mid-run."""


class StepMismatchError(TransportError):
    """Workers called all_gather with different step numbers."""


class TransportTimeoutError(TransportError):
    """A barrier or socket operation exceeded its deadline."""


class MalformedPayloadError(TransportError):
    """A wire message failed to decode.

    ``offset`` is the byte position at which decoding failed.
    """

    def __init__(self, message: str, offset: int):
        self.offset = offset
        super().__init__(f"{message} (at byte offset {offset})")
