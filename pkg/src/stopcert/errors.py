"""Exception taxonomy shared by all stopcert modules."""


class StopcertError(Exception):
    """Base class for all library errors."""


class DomainError(StopcertError):
    """A point lies outside the open interior of the state interval."""


class KinkError(StopcertError):
    """A derivative was requested exactly at a declared kink."""


class NumericalError(StopcertError):
    """A quadrature or root-finding step failed to converge."""


class NotInCatalog(StopcertError):
    """Analytic fundamental solutions requested for a non-catalog process."""


class FundamentalSolveError(StopcertError):
    """The shooting solve could not bracket a monotone positive solution."""

    def __init__(self, msg, last_bracket=None):
        super().__init__(msg)
        self.last_bracket = last_bracket


class MonotonicityError(StopcertError):
    """A computed fundamental solution violates monotonicity or positivity."""


class TrivialProblem(StopcertError):
    """The payoff is non-positive on the whole working window."""


class GreenDivergence(StopcertError):
    """A Green integral tail does not shrink under window extension."""


class HypothesisFailed(StopcertError):
    """A stated hypothesis of a verification condition fails on the grid."""

    def __init__(self, msg, location=None):
        super().__init__(msg)
        self.location = location


class NotDCRepresentable(StopcertError):
    """Scanned function is not a difference of convex functions."""


class ConfigError(StopcertError):
    """Malformed Monte Carlo or stopping-rule configuration."""


class SchemaError(StopcertError):
    """Problem file violates the expected schema."""

    def __init__(self, msg, field=None):
        super().__init__(msg)
        self.field = field
