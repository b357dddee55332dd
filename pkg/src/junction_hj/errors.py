"""Exception types raised by the numerical routines."""


class JunctionError(Exception):
    """Base class for all package errors."""


class BracketError(JunctionError, ValueError):
    """A bracket expansion hit its cap (usually a non-coercive input)."""


class LevelBelowMinimum(JunctionError, ValueError):
    """A level ``lambda`` was requested below the branch minimum ``A_i(p')``."""


class NonConvergenceError(JunctionError, RuntimeError):
    """An iterative method exhausted its iteration budget."""


class DivergenceError(NonConvergenceError):
    """The objective kept improving at the search-box expansion bound."""


class SingularPointError(JunctionError, ValueError):
    """Gradient requested on the excluded set ``{x = y > 0}`` of one branch."""
