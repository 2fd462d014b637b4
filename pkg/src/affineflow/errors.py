"""Exception types shared across the package."""


class AffineFlowError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(AffineFlowError):
    """Malformed user input (empty body, non-finite data, bad direction)."""


class IncompatibleGridsError(AffineFlowError):
    """Two grids that must match in geometry and time do not."""


class ImmersionError(AffineFlowError):
    """Patch first derivatives are linearly dependent at a queried point."""


class ConvexityError(AffineFlowError):
    """Strict convexity failed (indefinite second fundamental form or grid Hessian)."""


class ConditioningError(AffineFlowError):
    """Tangent-frame solve is too ill-conditioned to trust.

    Carries the offending condition number in ``cond``.
    """

    def __init__(self, message, cond):
        super().__init__(f"{message} (cond={cond:.3e})")
        self.cond = cond


class DomainError(AffineFlowError):
    """Evaluation outside the valid parameter/time domain."""


class ExtinctionError(DomainError):
    """Requested time is at or past the extinction time."""


class DegenerateHessianError(AffineFlowError):
    """Grid Hessian determinant stayed below the configured floor."""


class StabilityError(AffineFlowError):
    """Requested explicit time step exceeds the stable step size."""


class ConfigError(AffineFlowError):
    """Configuration file failed to parse or validate; message names the field."""
