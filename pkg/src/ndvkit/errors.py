"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: usage problems exit 1, data problems
exit 2, missing runtime dependencies (embeddings, checkpoints) exit 3.
"""


class NdvkitError(Exception):
    """Base class for all package errors."""


class IngestionError(NdvkitError):
    """Malformed input data (ragged CSV rows, empty files, bad schemas)."""


class DataError(NdvkitError):
    """Invalid values or preconditions on otherwise well-formed data."""


class EmbeddingLookupError(NdvkitError):
    """A serialized column text has no entry in the embedding store."""

    def __init__(self, text: str):
        super().__init__(f"no embedding stored for column text: {text!r}")
        self.text = text


class TransportError(NdvkitError):
    """Remote embedding provider failed after retries."""

    def __init__(self, message: str, attempts: int):
        super().__init__(f"{message} (after {attempts} attempt(s))")
        self.attempts = attempts


class MissingDependencyError(NdvkitError):
    """A required artifact (embedding store, checkpoint, ground truth) is absent."""
