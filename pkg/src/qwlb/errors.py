"""Exception hierarchy shared by all qwlb modules.

The CLI maps these onto process exit codes: configuration problems exit
with 2, numeric failures (NaN amplitudes, singular implicit blocks) with 3
and I/O or file-format problems with 4.
"""


class QwlbError(Exception):
    """Base class for all errors raised by qwlb."""


class InvalidArgumentError(QwlbError, ValueError):
    """A function argument violates its documented precondition."""


class ConfigError(QwlbError):
    """An experiment configuration is malformed or inconsistent."""


class NumericError(QwlbError):
    """The numerical state became invalid (NaN/Inf amplitude, blow-up)."""


class SingularOperatorError(NumericError):
    """A matrix that must be inverted is (numerically) singular."""


class CheckpointFormatError(QwlbError, IOError):
    """A checkpoint file does not conform to the binary format."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ObserverError(QwlbError):
    """An observer callback raised during time evolution."""

    def __init__(self, step: int, cause: BaseException):
        super().__init__(f"observer failed at step {step}: {cause!r}")
        self.step = step
