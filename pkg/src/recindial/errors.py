"""Exception types shared across the package."""


class RecInDialError(Exception):
    """Base class for all package errors."""


class CorpusError(RecInDialError):
    """Malformed corpus input (bad line, unbalanced markers, ...)."""


class VocabularyError(RecInDialError):
    """Vocabulary construction or partition violation."""


class DimensionError(RecInDialError):
    """Tensor shapes inconsistent with the graph or model config."""


class AutomatonError(RecInDialError):
    """A token was emitted from the partition disallowed by the pointer."""


class TrainingDivergedError(RecInDialError):
    """Loss became NaN/inf during optimization."""


class SessionNotFoundError(RecInDialError):
    """Chat session id unknown or expired."""
