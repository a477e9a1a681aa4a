"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument is outside the operation's documented domain."""


class GraphError(RuntimeError):
    """A recorded computation violates the tape contract."""


class FormatError(ValueError):
    """A ZDPC stream is malformed.

    Attributes:
        category: one of "bad_magic", "bad_version", "truncated",
            "size_overflow", "label_range", "class_count".
        offset: byte offset at which the problem was detected.
    """

    def __init__(self, message: str, *, category: str, offset: int):
        super().__init__(f"{message} (category={category}, byte offset={offset})")
        self.category = category
        self.offset = offset


class TrainingDiverged(RuntimeError):
    """A training step produced a non-finite loss."""
