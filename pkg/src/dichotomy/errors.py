"""Exception types shared across the package."""


class DichotomyError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(DichotomyError, ValueError):
    """Non-finite, empty, or otherwise malformed numerical input."""


class OrderError(DichotomyError, ValueError):
    """Time arguments violate the required ordering (forward propagation only)."""


class InvalidExponentError(DichotomyError, ValueError):
    """Lebesgue exponent outside [1, inf]."""


class InvalidPairError(DichotomyError, ValueError):
    """Exponent pair (p, q) with p < q."""


class ExcludedPairError(DichotomyError, ValueError):
    """The pair (p, q) = (inf, 1), for which reconstruction is not defined."""


class SingularBundleError(DichotomyError, ValueError):
    """Backward solve on the unstable bundle is rank-deficient beyond tolerance."""


class WindowOverflowError(DichotomyError, ValueError):
    """Propagator magnitude exceeds floating-point range on the requested window."""


class GridMismatchError(DichotomyError, ValueError):
    """Grid functions do not share a common grid."""


class ConfigError(DichotomyError, ValueError):
    """Scenario configuration failed validation.

    Carries the offending field name so the CLI can emit a field-level
    diagnostic.
    """

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field
