"""Exception types shared across the package."""


class ConfigError(ValueError):
    """A parameter or configuration value is out of its allowed range."""


class DataError(ValueError):
    """An input file or record is malformed (bad TSV, bad encoding, empty corpus)."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class ScoringError(ValueError):
    """A metric was asked to score an input it cannot handle (e.g. empty)."""


class TransportError(RuntimeError):
    """The remote backend connection failed (closed stream, timeout, refused)."""


class ProtocolError(RuntimeError):
    """The remote backend sent a record that violates the wire protocol."""


class NoParaphraseFound(Exception):
    """Every generated candidate was filtered out (duplicates of the source)."""
