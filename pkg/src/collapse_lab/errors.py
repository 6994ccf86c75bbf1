"""Exception types raised by collapse_lab."""


class CollapseLabError(Exception):
    """Base class for every error raised by this package."""


class InvalidModelError(CollapseLabError, ValueError):
    pass


class IsolatedNodeError(CollapseLabError, ValueError):
    """A node has no edges and isolated-node dropping is disabled."""


class DimensionMismatchError(CollapseLabError, ValueError):
    pass


class NonFiniteError(CollapseLabError, FloatingPointError):
    """The objective became NaN or infinite during optimization."""


class EmptyBlockError(CollapseLabError, ValueError):
    pass


class MissingClassError(CollapseLabError, ValueError):
    pass


class ConfigError(CollapseLabError, ValueError):
    pass
