"""Exception hierarchy shared by every module."""


class UnlearnError(Exception):
    """Base class for all toolkit errors."""


class ShapeError(UnlearnError, ValueError):
    pass


class NonFiniteError(UnlearnError, FloatingPointError):
    pass


class StateError(UnlearnError, RuntimeError):
    """An operation was called out of order (backward before forward, ...)."""


class CheckpointError(UnlearnError, ValueError):
    pass


class DataFormatError(UnlearnError, ValueError):
    pass


class ConfigError(UnlearnError, ValueError):
    pass
