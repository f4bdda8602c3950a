"""Exception and warning types raised across the package."""


class BonusMalusError(Exception):
    """Base class for all errors raised by :mod:`bonusmalus`."""


class DomainError(BonusMalusError, ValueError):
    """An argument lies outside the domain of the operation."""


class MalformedRuleError(BonusMalusError, ValueError):
    """A transition rule does not define a target for some (level, claims) pair."""


class NoUniqueStationaryError(BonusMalusError, ArithmeticError):
    """The chain has no unique stationary distribution (reducible or singular)."""


class ToleranceError(BonusMalusError, ArithmeticError):
    """A numerical routine failed to reach its tolerance.

    Attributes
    ----------
    estimate : float or None
        Best value reached before giving up.
    diagnostics : dict
        Free-form information about the failure.
    """

    def __init__(self, message, estimate=None, diagnostics=None):
        super().__init__(message)
        self.estimate = estimate
        self.diagnostics = dict(diagnostics or {})


class DegenerateDistributionError(BonusMalusError, ArithmeticError):
    """A moment needed by the estimator vanishes, e.g. ``Var(L) == 0``."""


class UnreachableLevelError(BonusMalusError, ArithmeticError):
    """A level carries (numerically) zero steady-state mass under the prior."""


class OracleScaleError(BonusMalusError, ValueError):
    """A brute-force routine was asked for a problem larger than it supports."""


class NumericDegeneracyError(BonusMalusError, ArithmeticError):
    """Every marginal likelihood underflowed, even in log space."""


class ConfigError(BonusMalusError, ValueError):
    """Invalid run configuration. ``field`` and ``line`` locate the problem."""

    def __init__(self, message, field=None, line=None):
        where = []
        if field:
            where.append(f"field '{field}'")
        if line is not None:
            where.append(f"line {line}")
        full = f"{message} ({', '.join(where)})" if where else message
        super().__init__(full)
        self.field = field
        self.line = line


class ClassCViolationWarning(UserWarning):
    """The fitted linear relativity has a negative slope (outside the class C)."""
