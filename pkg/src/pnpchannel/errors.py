"""Exception hierarchy for the pnpchannel package.

Everything raised deliberately by the library derives from :class:`PnpError`,
so callers can catch one base type.  The CLI maps subfamilies to exit codes.
"""


class PnpError(Exception):
    """Base class for all errors raised by this package."""


# ---------------------------------------------------------------------------
# problem / input validation


class InvalidProblem(PnpError):
    """Problem data violates a precondition (signs, positivity, ranges)."""


class BadParameters(PnpError):
    """Solver or mesh parameters are out of their admissible range."""


class OutOfDomain(PnpError):
    """Evaluation requested outside the channel interval [0, 1]."""


class DegenerateGeometry(PnpError):
    """Channel cross-section or wall radius is nonpositive."""


# ---------------------------------------------------------------------------
# numerics


class QuadratureFailure(PnpError):
    """Adaptive quadrature did not reach the requested tolerance."""


class RootFindFailure(PnpError):
    """A bracketing root solve failed to locate its target."""


class NonHyperbolic(PnpError):
    """Slow-manifold point has w <= 0; no hyperbolic splitting exists."""


class LogSingularity(PnpError):
    """A conserved-quantity logarithm was evaluated at a zero argument."""


class NonpositiveW(PnpError):
    """The slow-layer density combination w(x) lost positivity."""


class DivergentOrbit(PnpError):
    """A boundary-layer orbit left the stable/unstable cone and blew up."""


class EndpointMismatch(PnpError):
    """Matched endpoint values disagree beyond the verification tolerance."""


class NonConvergence(PnpError):
    """Newton iteration failed to reach the residual tolerance."""


class NotConverged(PnpError):
    """A result was requested from a solve that did not converge."""


class SingularSystem(PnpError):
    """A linear system arising in a solver was numerically singular."""


class StepRejected(PnpError):
    """A transient step produced nonpositive concentrations."""


class StagnantStep(PnpError):
    """Adaptive time stepping shrank the step below its floor."""


class NonpositiveConcentration(PnpError):
    """A functional of the concentrations was evaluated at c <= 0."""


# ---------------------------------------------------------------------------
# configuration / I-O


class ParseError(PnpError):
    """Run configuration text could not be parsed."""


class ValidationError(PnpError):
    """Run configuration parsed but failed schema validation."""


class IoError(PnpError):
    """Reading inputs or writing outputs failed."""
