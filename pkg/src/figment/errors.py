"""Exception types shared across the package."""


class FigmentError(Exception):
    """Base class for all package errors."""


class ConfigError(FigmentError, ValueError):
    """Invalid configuration or hyperparameter."""


class ShapeError(FigmentError, ValueError):
    """Array dimensions do not line up."""


class FormatError(FigmentError, ValueError):
    """Malformed input file."""

    def __init__(self, path, lineno, message):
        self.path = str(path)
        self.lineno = lineno
        super().__init__(f"{self.path}:{lineno}: {message}")


class UnknownEntityError(FigmentError, KeyError):
    """Entity id not present in the catalog."""

    def __str__(self):
        return f"unknown entity id: {self.args[0]!r}"


class MissingEmbedding(FigmentError, KeyError):
    """Token has no row in an embedding table."""

    def __str__(self):
        return f"no embedding for {self.args[0]!r}"


class AlignmentError(FigmentError, ValueError):
    """Two score matrices do not cover the same entities/types."""


class HashMismatchError(FigmentError, ValueError):
    """Artifacts were produced under different configurations."""
