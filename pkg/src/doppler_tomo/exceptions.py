"""Exception types raised by the toolkit."""


class DopplerError(Exception):
    """Base class for all toolkit errors."""


class NonTermination(DopplerError):
    """A traced curve did not leave the outer domain within the length budget."""


class StepFailure(DopplerError):
    """The generator returned a non-finite acceleration during tracing."""


class NoConvergence(DopplerError):
    """An iterative solver hit its iteration cap before reaching tolerance."""


class CurveNotMaximal(DopplerError):
    """A curve passed to a weight does not start on the outer boundary."""


class ZeroWeight(DopplerError):
    """The weight vanishes where its logarithm is required."""


class NotMeasurePreserving(DopplerError):
    """The principal symbol was requested for a flow with unknown Jacobian factor."""


class TooLarge(DopplerError):
    """A dense operation was requested above the configured size limit."""


class Degenerate(DopplerError):
    """The discrete system has a numerical kernel on solenoidal pairs."""

    def __init__(self, message, sigma_min=None, sigma_max=None):
        super().__init__(message)
        self.sigma_min = sigma_min
        self.sigma_max = sigma_max


class ConfigError(DopplerError):
    """Invalid experiment configuration."""
