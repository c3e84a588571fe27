"""Exception types raised across the package."""


class BSLMSError(Exception):
    """Base class for all package errors."""


class DimensionError(BSLMSError, ValueError):
    """Array length incompatible with the filter or partition size."""


class NumericError(BSLMSError, ValueError):
    """Non-finite input sample or observation."""


class DivergenceError(BSLMSError, FloatingPointError):
    """Adaptive weights became non-finite.

    Attributes
    ----------
    iteration : int
        Index of the update that produced the first non-finite weight.
    trial : object or None
        Identifier of the offending trial (e.g. ``(system, trial)`` or a
        seed) when raised from the simulation harness.
    """

    def __init__(self, iteration, trial=None, message=None):
        self.iteration = int(iteration)
        self.trial = trial
        if message is None:
            message = f"weights diverged at iteration {self.iteration}"
            if trial is not None:
                message += f" (trial {trial})"
        super().__init__(message)


class StepSizeError(BSLMSError, ValueError):
    """Step size outside the mean-square stability range ``(0, mu_max)``."""

    def __init__(self, mu, mu_max):
        self.mu = mu
        self.mu_max = mu_max
        super().__init__(
            f"step size mu={mu:.6g} violates 0 < mu < mu_max={mu_max:.6g} "
            "(mu_max = 2/((L+2)*sigma_x2))"
        )


class DegenerateTheoryError(BSLMSError, ArithmeticError):
    """The closed-form theory has no valid solution for these constants."""


class ConfigError(BSLMSError, ValueError):
    """Invalid or unparsable configuration.

    ``field`` names the offending key as a dotted path when known.
    """

    def __init__(self, message, field=None):
        self.field = field
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message)
