"""Exceptions raised by the solvers."""


class SICMDPError(Exception):
    """Base class for all errors raised by this package."""


class SingularSystem(SICMDPError):
    """A policy-evaluation linear system could not be solved."""


class GradientUnavailable(SICMDPError):
    """Projected ascent was requested without gradients or finite differences."""


class NumericalBreakdown(SICMDPError):
    """The simplex engine hit a pivot too small to trust."""


class InfeasibleOptimisticSet(SICMDPError):
    """The (optimistic) linear program has no feasible point."""


class EmptyGoodSet(SICMDPError):
    """SI-CPO finished without a single iterate under the violation tolerance."""
