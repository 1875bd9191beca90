"""Exception types shared across the package."""


class RouletteError(Exception):
    """Base class for all package errors."""


class EstimatorOverflow(RouletteError, ArithmeticError):
    """A weighted series term or estimate became non-finite."""

    def __init__(self, message, index=None, survival=None, factor=None):
        super().__init__(message)
        self.index = index
        self.survival = survival
        self.factor = factor


class InvalidSchedule(RouletteError, ValueError):
    """A truncation schedule or index distribution is unusable."""


class DegenerateSource(RouletteError, ValueError):
    """Pilot draws from a normalizer source cannot define a tilting plan."""


class DegenerateSign(RouletteError, ZeroDivisionError):
    """The signs of a chain sum to zero, so no corrected estimate exists."""


class DegenerateWeights(RouletteError, ArithmeticError):
    """All particle weights vanished at some stage of an annealing run."""


class UnsupportedRegime(RouletteError, ValueError):
    """Requested parameters fall outside what an algorithm supports."""


class CoalescenceError(RouletteError, RuntimeError):
    """Coupling from the past did not coalesce within its budget."""


class SizeError(RouletteError, ValueError):
    """A lattice is too large for an exact method."""


class QuadratureError(RouletteError, ArithmeticError):
    """Numerical integration did not reach the requested tolerance."""

    def __init__(self, message, estimate=None, error=None):
        super().__init__(message)
        self.estimate = estimate
        self.error = error


class ConfigError(RouletteError, ValueError):
    """Experiment configuration is invalid."""


class DatasetMismatch(RouletteError, ValueError):
    """Runs being compared were made on different datasets."""


class ChainAborted(RouletteError, RuntimeError):
    """A chain stopped early; ``checkpoint`` allows resuming it."""

    def __init__(self, message, iteration, checkpoint):
        super().__init__(message)
        self.iteration = iteration
        self.checkpoint = checkpoint
