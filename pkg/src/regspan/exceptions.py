"""Exception hierarchy shared by all regspan modules."""


class RegspanError(Exception):
    """Base class for every error raised by this package."""


# span codec

class SpanError(RegspanError, ValueError):
    pass


class InvalidSpan(SpanError):
    """A TokenSpan violates its own structural invariants."""


class OverlapError(SpanError):
    pass


class InterleavingError(SpanError):
    """A same-category head starts between a span's head and its tail."""


class IllegalDiscontiguity(SpanError):
    """The tagset does not allow BD/ID labels for the span's category."""


class LengthMismatch(SpanError):
    pass


class UncoveredToken(SpanError):
    pass


class DecodeError(SpanError):
    """Raised by strict-mode decoding of a malformed tag sequence."""

    def __init__(self, message, position=None):
        super().__init__(message)
        self.position = position


class DanglingContinuation(DecodeError):
    pass


class OrphanTail(DecodeError):
    pass


class DoubleTail(DecodeError):
    pass


class AdjacentTail(DecodeError):
    """A tail segment starts directly where its head ends."""


class UnknownLabel(SpanError):
    pass


# corpus io

class CorpusError(RegspanError, ValueError):
    pass


class MalformedLine(CorpusError):
    def __init__(self, message, line_number=None):
        super().__init__(message)
        self.line_number = line_number


class UnknownType(CorpusError):
    pass


class FragmentCountExceeded(CorpusError):
    pass


class BoundaryMismatch(CorpusError):
    pass


class EmptyDataset(CorpusError):
    pass


# crf engine

class CrfError(RegspanError):
    pass


class DimensionMismatch(CrfError, ValueError):
    pass


class EmptySentence(CrfError, ValueError):
    pass


class IllegalGoldSequence(CrfError, ValueError):
    pass


class ModelFileError(CrfError, IOError):
    pass


class VersionMismatch(ModelFileError):
    pass


class CorruptModel(ModelFileError):
    pass


# evaluation

class EvaluationError(RegspanError, ValueError):
    pass


class AlignmentError(EvaluationError):
    pass


class EmptyInput(EvaluationError):
    pass


class InvalidArgument(EvaluationError):
    pass


# lexicon

class LexiconError(RegspanError, ValueError):
    pass


class EmptySpan(LexiconError):
    pass


class NotEnoughEligible(LexiconError):
    pass
