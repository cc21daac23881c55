"""Exception hierarchy shared across the engine.

Transient errors mean the caller may retry; everything else is a hard
failure of the request or of stored-state integrity.
"""


class CounterspeechError(Exception):
    """Base class for all engine errors."""


class InvalidInputError(CounterspeechError, ValueError):
    """An argument violates a documented precondition."""


class ConfigurationError(CounterspeechError):
    """Required configuration (prompt preamble, few-shot pairs, ...) is missing."""


class TransientError(CounterspeechError):
    """Retryable failure of an external dependency."""


class TransientSourceError(TransientError):
    """Post source (platform API) unreachable."""


class TransientProviderError(TransientError):
    """Embedding provider unreachable."""


class TransientGenerationError(TransientError):
    """Generation client unreachable."""


class TransientPostError(TransientError):
    """Posting a reply to the platform failed; safe to retry."""


class CorpusFormatError(CounterspeechError):
    """A replay corpus line cannot be parsed."""

    def __init__(self, line_number: int, message: str) -> None:
        super().__init__(f"corpus line {line_number}: {message}")
        self.line_number = line_number


class StorageError(CounterspeechError):
    """The store is unavailable or an I/O operation failed."""


class StoreIntegrityError(StorageError):
    """A write conflicts with already-persisted state."""


class DegenerateTrainingError(CounterspeechError):
    """Training data contains a single class."""


class InvalidEmbeddingError(InvalidInputError):
    """Zero-norm or dimension-mismatched embedding vector."""


class LengthViolationError(CounterspeechError):
    """Generated reply exceeds the character limit even after a retry."""

    def __init__(self, length: int, limit: int) -> None:
        super().__init__(f"generated reply has {length} characters, limit is {limit}")
        self.length = length
        self.limit = limit


class DuplicateItemError(CounterspeechError):
    """A review item for this reply already exists."""


class DuplicateAssignmentError(CounterspeechError):
    """The post already has an experiment arm assignment."""


class InvariantViolationError(CounterspeechError):
    """A domain invariant check failed on write."""


class ExpiredItemError(CounterspeechError):
    """The review deadline has passed; the item is now expired."""


class AlreadyDecidedError(CounterspeechError):
    """The review item is no longer pending."""


class InvalidStateError(CounterspeechError):
    """Operation not allowed in the item's current state."""


class ScheduleError(CounterspeechError):
    """The requested run time is outside the configured windows or in quiet hours."""


class NotYetDueError(CounterspeechError):
    """The monitoring period has not elapsed yet."""


class InsufficientDataError(CounterspeechError):
    """Too few observations for the requested statistic."""


class DegenerateVarianceError(CounterspeechError):
    """Both samples have zero variance; the t statistic is undefined."""


class ExcludedObservationError(CounterspeechError):
    """Observation fails the metric's validity guard (e.g. no impression change)."""
