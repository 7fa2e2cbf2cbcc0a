"""Error types shared across the package."""


class NowcastError(Exception):
    """Base class for all package errors."""


class ShapeMismatchError(NowcastError, ValueError):
    """Tensor shapes incompatible with the requested operation."""


class DecodeError(NowcastError, ValueError):
    """Frame bytes could not be decoded."""


class MalformedFrameError(DecodeError):
    """Bad magic, header, or payload length in a raw frame file."""


class FrameRangeError(DecodeError):
    """Raw frame payload contains values outside [0, 1]."""


class CheckpointError(NowcastError, ValueError):
    """Base class for checkpoint load failures."""


class CheckpointMagicError(CheckpointError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointTruncatedError(CheckpointError):
    pass


class FetchError(NowcastError):
    """Network acquisition failed."""


class AuthError(FetchError):
    """API rejected the credential."""


class NonFiniteError(NowcastError, ArithmeticError):
    """A value that must be finite was NaN or Inf."""
