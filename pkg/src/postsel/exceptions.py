"""Exception hierarchy shared by all modules."""


class PostselError(Exception):
    """Base class for errors raised by postsel."""


class InvalidRegionError(PostselError, ValueError):
    """A truncation region with empty or malformed support."""


class DegenerateMassError(PostselError, FloatingPointError):
    """The truncation region carries (numerically) zero probability.

    ``coordinate`` is set when the failure happened inside a multivariate
    sampler.
    """

    def __init__(self, message, coordinate=None):
        super().__init__(message)
        self.coordinate = coordinate


class SingularCovarianceError(PostselError, ValueError):
    pass


class InvalidInitError(PostselError, ValueError):
    pass


class NoSelectionError(PostselError, ValueError):
    """Nothing was selected, so there is nothing to estimate."""


class NotSelectedError(PostselError, ValueError):
    pass


class BracketError(PostselError, RuntimeError):
    pass


class InsufficientSamplesError(PostselError, ValueError):
    pass


class RankDeficientError(PostselError, ValueError):
    pass


class NonConvergenceError(PostselError, RuntimeError):
    pass


class EmptyFoldError(PostselError, ValueError):
    pass


class SaturatedModelError(PostselError, ValueError):
    pass


class ConfigError(PostselError, ValueError):
    pass


class DimensionError(PostselError, ValueError):
    """The requested output is only available in low dimension."""


class ReplicateError(PostselError, RuntimeError):
    """A simulation replicate failed; the original error is ``__cause__``."""

    def __init__(self, message, rep_id):
        super().__init__(message)
        self.rep_id = rep_id
