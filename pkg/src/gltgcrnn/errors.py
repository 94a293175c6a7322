"""Exception hierarchy shared by every module."""


class GltError(ValueError):
    """Base class for all contract violations raised by this package."""


class ParseError(GltError):
    """Input text could not be parsed."""


class MalformedCsv(ParseError):
    pass


class ConfigError(ParseError):
    pass


class NegativeSpeed(GltError):
    pass


class TooShort(GltError):
    pass


class BadFractions(GltError):
    pass


class BadShape(GltError):
    pass


class ShapeMismatch(BadShape):
    pass


class BadScale(GltError):
    pass


class BadK(GltError):
    pass


class BadHop(GltError):
    pass


class NonSymmetric(GltError):
    pass


class BadGamma(GltError):
    pass


class BadParams(GltError):
    pass


class NotDivisibleByThree(GltError):
    pass


class NonFinite(GltError, ArithmeticError):
    pass


class EmptyBatch(GltError):
    pass


class EmptyDataset(GltError):
    pass


class AllTargetsZero(GltError):
    pass


class BadLink(GltError):
    pass


class BadDay(GltError):
    pass
