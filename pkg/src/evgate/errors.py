"""Exception hierarchy shared across the package."""


class EvgateError(Exception):
    """Base class for all package-specific errors."""


class ZeroMass(EvgateError):
    """Operation requires a measure with positive total mass."""


class InvalidFraction(EvgateError):
    """A boundary split fraction fell outside [0, 1]."""


class MassMismatch(EvgateError):
    """Two measures that must share total mass do not."""


class DimMismatch(EvgateError):
    """Two measures that must share ambient dimension do not."""


class SolverFailure(EvgateError):
    """An LP or root solve did not converge to tolerance."""


class SizeOverflow(EvgateError):
    """A requested product space exceeds the configured size cap."""


class Infeasible(EvgateError):
    """An optimization problem has no feasible point."""


class InfeasibleExactness(EvgateError):
    """The exact-expectation constraints admit no nonnegative solution."""


class NewtonDivergence(EvgateError):
    """Damped Newton failed to reach the residual tolerance."""


class DegenerateNode(EvgateError):
    """All mass sits at a single diagonal point; nothing to separate."""


class NoSignChange(EvgateError):
    """The separating-angle residual never changes sign across the scan."""


class UnroutablePoint(EvgateError):
    """A query point routed into a region carrying no mass."""
