"""Exception types shared across the toolkit."""


class MorphoparseError(Exception):
    """Base class for all toolkit errors."""


class ConlluParseError(MorphoparseError):
    """Malformed CoNLL-U input. Carries the 1-based line number when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class FormatError(MorphoparseError):
    """Structurally invalid sentence (bad ids, cyclic head chains, ...)."""


class ConfigError(MorphoparseError):
    """Invalid configuration value."""


class DimensionError(MorphoparseError):
    """Shape mismatch in a numerical operation."""


class CheckpointError(MorphoparseError):
    """Unreadable or incompatible model checkpoint."""


class AlignmentError(MorphoparseError):
    """Gold/system token streams cannot be reconciled."""


class EvaluationError(MorphoparseError):
    """Gold/system corpora cannot be evaluated against each other."""
