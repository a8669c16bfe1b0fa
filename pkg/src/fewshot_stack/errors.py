"""Exception hierarchy.

Every failure mode named by the file format, the reshape operator, the
episodic protocol or the CLI maps onto one of these classes so callers
(and the CLI exit-code table) can distinguish them.
"""


class FewshotStackError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(FewshotStackError):
    """Invalid configuration: bad sizes, flags, or option combinations."""


class ValidationError(FewshotStackError):
    """A data structure violates one of its invariants."""


class DataError(FewshotStackError):
    """The data cannot support the requested operation (too few samples, ...)."""


class DivisibilityError(FewshotStackError):
    """Vector length is not divisible by the requested spatial grid S*S.

    This is the error that reproduces the impossible grid/backbone
    combinations: it is expected, reportable state in ablation sweeps.
    """


class FsfError(FewshotStackError):
    """Malformed FSF feature file."""


class BadMagicError(FsfError):
    """File does not start with the FSF magic bytes."""


class UnsupportedVersionError(FsfError):
    """FSF version field is not one this reader understands."""


class TruncatedFileError(FsfError):
    """File ends before the declared payload is complete."""


class NonFiniteValueError(FsfError):
    """Feature payload contains NaN or Inf."""


class JoinError(FewshotStackError):
    """Feature stores cannot be joined (class mismatch, disjoint keys, ...)."""


class DegenerateInputError(DataError):
    """Input admits no meaningful affinity structure (e.g. identical points)."""
