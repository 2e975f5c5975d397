"""Exception types raised across the package.

Every failure mode has a dedicated class so callers can react to the
specific condition instead of parsing messages.
"""


class CrplError(Exception):
    """Base class for all package errors."""


class ZeroVector(CrplError):
    """Normalization requested for a vector with (near-)zero norm."""


class DimensionMismatch(CrplError):
    """Two vectors or matrices that must agree in shape do not."""


class EmptyInput(CrplError):
    """An operation received an empty sequence where data is required."""


class EmptySequence(CrplError):
    """The text encoder received an empty token sequence."""


class UnknownOwner(CrplError):
    """Prompt composition asked for a domain the bank does not hold."""


class MissingCentroid(CrplError):
    """A (domain, class) centroid cell needed for weighting is absent."""


class InfeasibleMarginals(CrplError):
    """Transport marginals do not both sum to one (guards rounding)."""


class NotConverged(CrplError):
    """Sinkhorn stopped at max_iter with marginal violation above tol.

    Carries the last iterate so the caller can decide whether the
    approximate plan is still usable.
    """

    def __init__(self, message, plan=None, violation=None):
        super().__init__(message)
        self.plan = plan
        self.violation = violation


class NonIntegralCardinalities(CrplError):
    """Constrained assignment oracle needs B * pi_k to be integral."""


class TooLarge(CrplError):
    """Brute-force enumeration would exceed the configured guard."""


class IoFailure(CrplError):
    """A dataset or checkpoint file could not be read or written."""


class SchemaMismatch(CrplError):
    """On-disk manifest disagrees with the expected schema or shapes."""


class TruncatedBlob(CrplError):
    """A binary blob's byte length does not match its declared shape."""


class SeedFitFailure(CrplError):
    """Class-token fit failed verification; regenerate with a new seed."""
