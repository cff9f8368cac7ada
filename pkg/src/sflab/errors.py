"""Exception types shared across the package."""


class SflabError(Exception):
    """Base class for all package-specific errors."""


class DimensionMismatch(SflabError):
    pass


class DimensionExceeded(SflabError):
    pass


class NotSymmetric(SflabError):
    pass


class InvalidProbability(SflabError):
    pass


class DomainError(SflabError):
    pass


class UnsortedInput(SflabError):
    pass


class DegreeMismatch(SflabError):
    pass


class VariantInputMismatch(SflabError):
    pass


class NoForwardCache(SflabError):
    pass


class DivergenceDetected(SflabError):
    pass


class RegularizationViolated(SflabError):
    pass


class FormatError(SflabError):
    """Corrupt or truncated binary artifact (bad magic, checksum, size)."""


class DatasetFormatError(SflabError):
    pass


class ConfigError(SflabError):
    pass
