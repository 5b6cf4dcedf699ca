"""Exception types shared across the package."""


class MlobError(ValueError):
    """Base class for all errors raised by this package."""


class ValidationError(MlobError):
    """A model parameter or standing assumption is violated."""


class DomainError(MlobError):
    """A state argument lies outside the mathematical domain of an object."""


class BookExhaustedError(DomainError):
    """A trade would walk the order book beyond its support."""


class BracketError(MlobError):
    """A required root could not be bracketed in the search interval."""


class BoundaryRangeError(MlobError):
    """A query lies beyond the range the free boundary was solved on."""


class SingularityError(MlobError):
    """An ODE right-hand side was evaluated at or beyond its singularity."""


class AdmissibilityError(MlobError):
    """A requested strategy violates an admissibility constraint."""


class ConfigError(MlobError):
    """A config file or manifest is malformed."""
