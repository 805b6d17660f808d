"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Tensor shapes are incompatible with the requested operation."""


class StateError(RuntimeError):
    """An object was used in the wrong lifecycle state."""


class NumericalError(ArithmeticError):
    """A non-finite value appeared where finite values are required."""


class FormatError(ValueError):
    """A binary or text file does not follow its expected layout."""


class IngestionError(ValueError):
    """Annotation rows or frame files could not be ingested.

    ``problems`` holds one human-readable line per offending row.
    """

    def __init__(self, summary: str, problems=()):
        self.summary = summary
        self.problems = list(problems)
        super().__init__("\n".join([summary, *self.problems]))


class MappingError(ValueError):
    """A raw label is outside the known emotion vocabulary."""


class ProtocolError(ValueError):
    """An evaluation protocol invariant was violated."""


# What the command line reports as a domain error (exit status 1).
FmanetErrorTypes = (ValueError, ArithmeticError, RuntimeError, OSError, KeyError)
