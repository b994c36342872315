"""Exception hierarchy shared by all fifonet modules."""


class FifoNetError(Exception):
    """Base class for every error raised by fifonet."""


class NetworkError(FifoNetError, ValueError):
    """The network description is not a valid rooted tree of cells."""


class CycleDetected(NetworkError):
    pass


class MultipleUpstream(NetworkError):
    pass


class ColumnSumExceeded(NetworkError):
    pass


class DisconnectedCell(NetworkError):
    pass


class NonPositiveTurningRate(NetworkError):
    pass


class NotNilpotent(FifoNetError):
    pass


class DimensionMismatch(FifoNetError, ValueError):
    pass


class StateOutOfBox(FifoNetError, ValueError):
    pass


class NonFiniteState(FifoNetError, FloatingPointError):
    pass


class StepSizeTooLarge(FifoNetError, ValueError):
    pass


class SetupInvariantViolated(FifoNetError):
    pass


class NotDrained(FifoNetError):
    pass


class AllPointsSkipped(FifoNetError):
    pass


class NoDivergeInNetwork(FifoNetError, ValueError):
    pass


class GridMismatch(FifoNetError, ValueError):
    pass


class ConfigError(FifoNetError, ValueError):
    """Invalid configuration file. ``key`` and ``line`` locate the problem when known."""

    def __init__(self, message, key=None, line=None):
        self.key = key
        self.line = line
        where = []
        if key is not None:
            where.append(f"key '{key}'")
        if line is not None:
            where.append(f"line {line}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
