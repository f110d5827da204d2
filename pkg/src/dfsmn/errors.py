"""Exception hierarchy shared by every module."""


class FSMNError(Exception):
    """Base class for all package errors."""


class ShapeError(FSMNError, ValueError):
    pass


class ConfigError(FSMNError, ValueError):
    pass


class DataError(FSMNError, ValueError):
    pass


class StreamStateError(FSMNError, RuntimeError):
    pass


class ParseError(FSMNError, ValueError):
    """Malformed topology string; ``offset`` is a UTF-8 byte offset into the input."""

    def __init__(self, message: str, offset: int, text: str = ""):
        self.offset = offset
        self.text = text
        super().__init__(f"{message} at byte offset {offset}")


class FormatError(FSMNError, ValueError):
    """Corrupt or unsupported binary file; ``offset`` is where decoding stopped."""

    def __init__(self, message: str, offset: int):
        self.offset = offset
        super().__init__(f"{message} (offset {offset})")
