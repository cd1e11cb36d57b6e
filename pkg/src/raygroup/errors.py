"""Exception hierarchy shared by all raygroup modules."""


class RaygroupError(Exception):
    """Base class for all library errors."""


class ParseError(RaygroupError):
    """A file or config could not be parsed; the message names the record."""


class ValidationError(RaygroupError):
    """A domain invariant was violated by otherwise well-formed input."""


class IoError(RaygroupError):
    """A file could not be read or written."""


class InvalidParameter(RaygroupError):
    """An argument is outside its documented domain."""


class ShapeMismatch(RaygroupError):
    """Two array arguments that must be shape-aligned are not."""


class MissingTerm(RaygroupError):
    """A required named loss term was not supplied."""


class NonFiniteTerm(RaygroupError):
    """A loss term is NaN or infinite."""


class GenerationFailure(RaygroupError):
    """Synthetic scene generation could not satisfy its constraints."""


class EmptyEvaluation(RaygroupError):
    """An evaluation was requested with no ground truth to evaluate against."""
