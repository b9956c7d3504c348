"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class IndexTrackError(Exception):
    exit_code = 1


class ConfigError(IndexTrackError):
    exit_code = 2


class DataError(IndexTrackError):
    exit_code = 3


class NumericalError(IndexTrackError):
    exit_code = 4


class ConditionError(NumericalError):
    """Contraction conditions for the rebalancing equation do not hold."""


class DivergenceError(NumericalError):
    """Fixed-point iteration hit its iteration cap."""
