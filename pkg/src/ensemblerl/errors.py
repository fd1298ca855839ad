"""Exception types shared across the package."""


class EnsembleRlError(Exception):
    """Base class for package-specific failures."""


class TruncationError(EnsembleRlError):
    """Rejection sampling exhausted its attempt budget.

    Raised when a truncated-Gaussian dimension has so little mass inside
    [low, high] that the configured number of draws never landed in bounds.
    """


class NumericalBlowupError(EnsembleRlError):
    """A rollout produced a non-finite state or action."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class DegeneratePosteriorError(EnsembleRlError):
    """Every importance weight underflowed to zero.

    No candidate model explains the observed trajectory; a wider sampling
    distribution (or larger transition-noise scale) is needed.
    """


class TrainingError(EnsembleRlError):
    """Wraps a failure inside the training loop with its iteration index."""

    def __init__(self, iteration, message):
        super().__init__(f"iteration {iteration}: {message}")
        self.iteration = iteration


class ConfigError(EnsembleRlError):
    """Invalid or missing run-configuration field."""

    def __init__(self, field, message):
        super().__init__(f"config field '{field}': {message}")
        self.field = field


class PosteriorCollapseWarning(UserWarning):
    """Effective sample size of the posterior fell below the safe threshold."""
