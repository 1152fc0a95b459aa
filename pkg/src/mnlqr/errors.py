"""Exception types shared across the package."""


class MnlqrError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(MnlqrError, ValueError):
    """An array argument has the wrong shape or non-finite entries."""


class SymmetryError(MnlqrError, ValueError):
    """A matrix expected to be symmetric is too far from its transpose."""


class DefinitenessError(MnlqrError, ValueError):
    """A weight matrix violates its required definiteness."""


class ConfigError(MnlqrError, ValueError):
    """Invalid problem configuration.

    Carries one message per offending field in ``problems`` so a caller can
    report everything wrong with a config file at once.
    """

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        lines = "\n".join("  - " + p for p in self.problems)
        super().__init__("invalid configuration:\n" + lines)


class NonStabilizingGainError(MnlqrError):
    """A gain failed the mean-square stability test where a stabilizer is required."""

    def __init__(self, message, gain=None, abscissa=None, iteration=None):
        super().__init__(message)
        self.gain = gain
        self.abscissa = abscissa
        self.iteration = iteration


class NumericalError(MnlqrError):
    """A linear-algebra step lost too much accuracy to trust its result."""


class RankConditionError(MnlqrError):
    """Collected data is not rich enough to identify the value function.

    ``report`` holds the :class:`~mnlqr.adp.RankReport` that failed.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class IndefiniteCurvatureError(MnlqrError):
    """The identified input-curvature term R + H is not positive definite."""


class SimulationBlowupError(MnlqrError):
    """A trajectory or second moment left the numerically trustworthy range."""

    def __init__(self, message, path=None, time=None):
        super().__init__(message)
        self.path = path
        self.time = time


class MomentAccuracyError(MnlqrError):
    """Moment propagation lost positive semidefiniteness beyond tolerance."""
