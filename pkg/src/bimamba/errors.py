"""Exception types shared across the package."""


class BimambaError(Exception):
    """Base class for all package errors."""


class ShapeError(BimambaError, ValueError):
    """Operands have incompatible shapes; message names the offending axes."""


class DomainError(BimambaError, ValueError):
    """A numeric argument is outside the operation's domain."""


class ModeError(BimambaError, ValueError):
    """Operation invoked on parameters of the wrong mode (e.g. selective vs LTI)."""


class ContractError(BimambaError, ValueError):
    """A caller-side precondition was violated."""


class ConfigError(BimambaError, ValueError):
    """An invalid model, training, or run configuration."""


class ParseError(BimambaError, ValueError):
    """Malformed input file. ``offset`` is the byte position when known."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class AlignmentError(BimambaError, ValueError):
    """Labels and signal duration disagree."""


class TrainingError(BimambaError, RuntimeError):
    """Training aborted (e.g. non-finite loss or gradients)."""
