"""Exception hierarchy shared by every kolmolab module."""


class KolmolabError(Exception):
    """Base class for all errors raised by kolmolab."""


class ConfigurationError(KolmolabError, ValueError):
    """Invalid parameters or inconsistent inputs."""


class DomainError(KolmolabError, ValueError):
    """A request falls outside the mathematical domain of an operation."""


class ResolutionError(ConfigurationError):
    """A length scale is not resolved by the grid."""


class DegenerateInputError(KolmolabError, ValueError):
    """A ratio cannot be formed because its denominator vanishes."""


class HypothesisViolation(KolmolabError):
    """A standing hypothesis of the theory fails for the given input.

    The measured quantity that violated the hypothesis is kept on
    ``measured`` so that callers can report it.
    """

    def __init__(self, message, measured=None):
        super().__init__(message)
        self.measured = measured


class ConvergenceError(KolmolabError, RuntimeError):
    """An iterative eigen-solver did not reach its tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class SolveError(KolmolabError, RuntimeError):
    """A linear solve broke down or did not converge."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class SingularityError(SolveError):
    """The assembled system is numerically singular."""
