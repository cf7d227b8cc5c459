"""Exception hierarchy shared by all modules."""


class LadderError(Exception):
    """Base class for every error raised by ladder_eth."""


class InvalidSectorError(LadderError, ValueError):
    pass


class DimensionError(LadderError, ValueError):
    pass


class StateError(LadderError, RuntimeError):
    """An object lacks data the requested operation needs."""


class EmptyShellError(LadderError, ValueError):
    """Energy-shell weights or a filtered state vanished numerically."""


class DegenerateObservableError(LadderError, ValueError):
    pass


class BoundsError(LadderError, RuntimeError):
    pass


class PlanError(LadderError, ValueError):
    pass


class AccuracyError(LadderError, RuntimeError):
    def __init__(self, message, achieved_tail=None):
        super().__init__(message)
        self.achieved_tail = achieved_tail


class TuningError(LadderError, RuntimeError):
    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class AveragingWindowError(LadderError, RuntimeError):
    pass


class WindowError(LadderError, ValueError):
    pass


class UnfoldingError(LadderError, RuntimeError):
    pass


class SymmetryContaminationError(LadderError, RuntimeError):
    pass


class ConfigError(LadderError, ValueError):
    pass


class InfeasibleSpecError(EmptyShellError):
    """A MOD specification whose filter annihilates the random state."""


class DomainError(LadderError, ValueError):
    """Input outside the domain of a fit (e.g. a logarithm of a non-positive value)."""


class CacheError(LadderError, RuntimeError):
    """A cache file exists but cannot be trusted (bad magic, key mismatch, truncation)."""
