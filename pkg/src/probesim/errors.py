"""Exception types shared across the toolkit."""


class ProbesimError(Exception):
    """Base class for all toolkit errors."""


class GeometryError(ProbesimError, ValueError):
    """A geometric constraint is violated (overlapping holes, point inside metal, ...)."""


class SizingError(ProbesimError, ValueError):
    """A structure does not fit in the simulation domain."""


class StabilityError(ProbesimError, RuntimeError):
    """The time-domain update diverged."""


class ModeError(ProbesimError, ValueError):
    """No guided mode exists for the requested slab parameters."""


class ApodizationError(ProbesimError, ValueError):
    """The effective-index ladder leaves the physically realizable range."""


class RefractionError(ProbesimError, ValueError):
    """No propagating exit ray exists for the requested polish geometry."""


class DegenerateInputError(ProbesimError, ValueError):
    """An input carries no usable signal (zero power field, ...)."""


class ExtractionError(ProbesimError, ValueError):
    """A requested feature cannot be extracted from the data."""


class FitError(ProbesimError, RuntimeError):
    """A least-squares fit failed to detect a feature or to converge."""


class SweepError(ProbesimError, RuntimeError):
    """A tolerance sweep failed to re-optimize at some point."""


class TimingError(ProbesimError, ValueError):
    """A pulse sequence timing constraint is violated."""


class ConditioningError(ProbesimError, ValueError):
    """A fit problem is degenerate (coplanar orientations, repeated abscissae, ...)."""


class ConfigValidationError(ProbesimError, ValueError):
    """A study configuration failed schema validation."""
