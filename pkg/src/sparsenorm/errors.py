"""Exception types shared across the package."""


class SparsenormError(Exception):
    """Base class for all library-specific errors."""


class ShapeError(SparsenormError):
    """Operands have incompatible dimensions."""


class BoundaryError(SparsenormError):
    """A Jacobian or gradient was requested at an indicator boundary,
    where the map is not differentiable."""


class SubsetError(SparsenormError):
    """A mass-function subset query used a set of the wrong cardinality."""


class TotalConflictError(SparsenormError):
    """Dempster combination of totally conflicting mass functions."""


class ConfigError(SparsenormError):
    """Invalid benchmark or dataset configuration."""


class DivergenceError(SparsenormError):
    """Training produced a non-finite objective."""
