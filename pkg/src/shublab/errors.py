"""Exception types raised by the laboratory modules.

Every named failure mode gets its own class so callers (and the CLI) can
distinguish precondition violations from genuine numerical trouble.  All of
them derive from ShubLabError; validation-style problems additionally derive
from ValueError so generic handling keeps working.
"""


class ShubLabError(Exception):
    """Base class for all package-specific errors."""


class NotUnimodular(ShubLabError, ValueError):
    """Matrix determinant is not +-1."""


class NotHyperbolic(ShubLabError, ValueError):
    """|trace| <= 2, so the matrix has an eigenvalue on the unit circle."""


class CapExceeded(ShubLabError, RuntimeError):
    """An enumeration would produce more points than the configured cap."""


class OutsideChart(ShubLabError, ValueError):
    """Point lies beyond the validity radius of the fiber chart."""


class StepTooCoarse(ShubLabError, RuntimeError):
    """Embedded half-step comparison of the integrator exceeded tolerance."""


class NotFixedPoint(ShubLabError, ValueError):
    """A designated point is not fixed by its map (exact rational check)."""


class BadFlowTime(ShubLabError, ValueError):
    """Flow time T violates 1 < lambda_s * e^T < lambda_u."""


class SupportHitsP(ShubLabError, ValueError):
    """Perturbation ball around q reaches the Anosov fixed point p."""


class GammaOrderViolated(ShubLabError, ValueError):
    """Base contraction rate is not dominated by the fiber center rate."""


class RhoTooLarge(ShubLabError, ValueError):
    """Bump radius too large for a safe fiber chart."""


class NewtonDiverged(ShubLabError, RuntimeError):
    """Newton iteration failed to converge from the given seed."""


class CountOutOfRange(ShubLabError, RuntimeError):
    """A periodic class produced a solution count outside [1, 3]."""


class JacobianOverflow(ShubLabError, OverflowError):
    """A cocycle entry exceeded the representable range."""


class EpsilonTooLarge(ShubLabError, ValueError):
    """Bowen radius too large relative to the separation of base orbits."""


class ConfigError(ShubLabError, ValueError):
    """Experiment configuration failed to parse or validate."""
