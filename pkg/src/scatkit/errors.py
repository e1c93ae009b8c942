"""Exception types shared across the toolkit."""


class InvalidArgumentError(ValueError):
    """An argument violates a documented precondition."""


class UnsupportedConfigError(ValueError):
    """A configuration is syntactically valid but not supported."""


class FormatError(ValueError):
    """A file does not conform to its binary or text format.

    ``offset``, when not None, is the byte position at which parsing failed.
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset
