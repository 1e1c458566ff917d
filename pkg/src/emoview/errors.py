"""Exception taxonomy shared by all emoview modules.

Every domain failure raises a subclass of :class:`EmoviewError`; the CLI maps
these to exit code 1 and the HTTP service to status 422. Constructor arguments
are kept structured (frame, annotator id, offending value) so callers can
report precisely what was rejected.
"""

from __future__ import annotations


class EmoviewError(Exception):
    """Base class for all domain errors raised by this package."""


# --- annotation schema / aggregation -----------------------------------------

class SchemaVersionUnknown(EmoviewError):
    def __init__(self, version: object):
        self.version = version
        super().__init__(f"unknown schema_version: {version!r}")


class UnknownEmotion(EmoviewError):
    def __init__(self, name: object):
        self.name = name
        super().__init__(f"unknown emotion label: {name!r}")


class ConfidenceOutOfRange(EmoviewError):
    def __init__(self, value: object):
        self.value = value
        super().__init__(f"confidence score outside [0, 5]: {value!r}")


class DuplicateAnnotator(EmoviewError):
    def __init__(self, frame: int, annotator_id: str):
        self.frame = frame
        self.annotator_id = annotator_id
        super().__init__(f"frame {frame}: duplicate annotator {annotator_id!r}")


class RationaleInSimpleMode(EmoviewError):
    def __init__(self, frame: int):
        self.frame = frame
        super().__init__(f"frame {frame}: rationale present but document mode is 'simple'")


class AllZeroScores(EmoviewError):
    """Every class sums to zero for a frame; callers must exclude or flag it."""

    def __init__(self, frame: int | None = None):
        self.frame = frame
        where = f"frame {frame}" if frame is not None else "frame"
        super().__init__(f"{where}: no rater selected any emotion")


class AnnotatorWithNoSelections(EmoviewError):
    def __init__(self, annotator_id: str):
        self.annotator_id = annotator_id
        super().__init__(f"annotator {annotator_id!r} has no nonzero selections")


class MalformedDocument(EmoviewError):
    def __init__(self, detail: str):
        super().__init__(f"malformed annotation document: {detail}")


class EmptyInput(EmoviewError):
    def __init__(self, what: str = "input"):
        super().__init__(f"empty {what}")


# --- context construction -----------------------------------------------------

class MissingFrame(EmoviewError):
    def __init__(self, timestamp: int):
        self.timestamp = timestamp
        super().__init__(f"no frame available at t={timestamp}s")


class EmptyWindow(EmoviewError):
    def __init__(self, t: int):
        self.t = t
        super().__init__(f"audio window empty at t={t}s")


class MissingSummary(EmoviewError):
    def __init__(self, index: int):
        self.index = index
        super().__init__(f"segment summary {index} not available")


class BudgetUnsatisfiable(EmoviewError):
    def __init__(self, words: int, budget: int):
        self.words = words
        self.budget = budget
        super().__init__(
            f"background cannot be reduced under the word budget ({words} > {budget})"
        )


# --- model endpoint -------------------------------------------------------------

class EndpointUnreachable(EmoviewError):
    def __init__(self, detail: str, attempts: int):
        self.attempts = attempts
        super().__init__(f"endpoint unreachable after {attempts} attempts: {detail}")


class TimeoutExceeded(EmoviewError):
    def __init__(self, timeout_seconds: float, attempts: int):
        self.timeout_seconds = timeout_seconds
        self.attempts = attempts
        super().__init__(f"request timed out after {timeout_seconds}s ({attempts} attempts)")


class EmptyCompletion(EmoviewError):
    def __init__(self) -> None:
        super().__init__("model returned an empty completion")


class MalformedCompletion(EmoviewError):
    def __init__(self, detail: str):
        super().__init__(f"completion not parseable as the requested structure: {detail}")


# --- prompt building ------------------------------------------------------------

class VariantInputMismatch(EmoviewError):
    def __init__(self, variant: str, detail: str):
        self.variant = variant
        super().__init__(f"variant {variant}: {detail}")


class MissingAggregate(EmoviewError):
    def __init__(self, frame_key: object):
        self.frame_key = frame_key
        super().__init__(f"no aggregated label for frame {frame_key}")


class MissingContext(EmoviewError):
    def __init__(self, frame_key: object):
        self.frame_key = frame_key
        super().__init__(f"no context triplet for frame {frame_key}")


# --- dataset pipeline -------------------------------------------------------------

class UndecodableMedia(EmoviewError):
    def __init__(self, uri: str, detail: str = ""):
        self.uri = uri
        msg = f"cannot decode media {uri!r}"
        super().__init__(f"{msg}: {detail}" if detail else msg)


class ZeroDuration(EmoviewError):
    def __init__(self, uri: str, duration: float):
        self.uri = uri
        self.duration = duration
        super().__init__(f"clip {uri!r} too short for one full sampling interval ({duration}s)")


class LowConfidenceAlignment(EmoviewError):
    def __init__(self, best_similarity: float, threshold: float):
        self.best_similarity = best_similarity
        self.threshold = threshold
        super().__init__(
            f"best alignment similarity {best_similarity:.3f} below threshold "
            f"{threshold:.3f}; set a manual offset"
        )


class SingleMovieCorpus(EmoviewError):
    def __init__(self, n_movies: int):
        self.n_movies = n_movies
        super().__init__(f"cannot split {n_movies} movie(s) into two non-empty sets")


# --- service ----------------------------------------------------------------------

class PortInUse(EmoviewError):
    def __init__(self, port: int):
        self.port = port
        super().__init__(f"port {port} already in use")


class CorpusNotFound(EmoviewError):
    def __init__(self, root: str):
        self.root = root
        super().__init__(f"corpus root not found: {root!r}")
