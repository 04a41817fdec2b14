"""Exception hierarchy shared by every module."""


class WdstError(Exception):
    """Base class for all package errors."""


class ContractError(WdstError, ValueError):
    """A precondition on an operation's inputs was violated."""


class ConfigError(WdstError, ValueError):
    """Invalid or inconsistent configuration."""


class FormatError(WdstError, ValueError):
    """A weight file is malformed.

    ``offset`` is the byte position at which parsing failed.
    """

    def __init__(self, message, offset):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class ImageIOError(WdstError, OSError):
    """An image file could not be read or written."""

    def __init__(self, path, reason):
        super().__init__(f"{path}: {reason}")
        self.path = str(path)
        self.reason = reason


class TrainingDiverged(WdstError, RuntimeError):
    """Loss became non-finite during training."""
