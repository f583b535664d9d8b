"""Exception hierarchy shared by the simulation and estimation layers."""


class FrontLabError(Exception):
    pass


class DomainError(FrontLabError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ConfigurationError(FrontLabError, ValueError):
    """Inconsistent or invalid simulation / experiment parameters."""


class WindowOverflowError(FrontLabError):
    """The interface no longer fits inside the computational window.

    ``side`` is ``"left"`` or ``"right"`` (or ``"both"`` when the interface is
    wider than the usable part of the window).
    """

    def __init__(self, message, side="both", checkpoint=None):
        super().__init__(message)
        self.side = side
        self.checkpoint = checkpoint


class NumericalBlowupError(FrontLabError):
    """A non-finite value appeared in the field or in an accumulator."""

    def __init__(self, message, snapshot=None, checkpoint=None):
        super().__init__(message)
        self.snapshot = snapshot
        self.checkpoint = checkpoint


class EstimationError(FrontLabError):
    """Not enough data (samples, replicas, post burn-in points) to estimate."""


class DegenerateWeightsError(EstimationError):
    """Importance weights collapsed: effective sample size below the gate."""
