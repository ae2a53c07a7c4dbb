"""Exception hierarchy.

Everything raised on purpose by the package derives from ``GeoshapeError``;
the CLI maps subclasses of ``NumericalError`` to exit code 3.
"""


class GeoshapeError(Exception):
    pass


class NumericalError(GeoshapeError):
    pass


class DomainError(NumericalError):
    """A point lies outside the chart (or a stencil leaves it)."""


class DegenerateMetric(NumericalError):
    pass


class HillBoundary(DegenerateMetric):
    """Jacobi conformal factor 2(E - V) is below ``jacobi_epsilon``."""


class RankDeficientFrame(NumericalError):
    pass


class DomainExit(DomainError):
    """An integrated trajectory left the chart."""


class StepFailure(NumericalError):
    pass


class ZeroSpeed(NumericalError):
    pass


class MatchingFailed(GeoshapeError):
    pass


class AllCandidatesDegenerate(NumericalError):
    pass


class UnknownSystem(GeoshapeError, KeyError):
    pass


class ConfigError(GeoshapeError):
    pass
