"""Exception types raised by the library."""


class FxtAdaptError(Exception):
    """Base class for all library errors."""


class DimensionMismatch(FxtAdaptError, ValueError):
    pass


class AllZeroMatrix(FxtAdaptError, ValueError):
    pass


class NonFiniteOutput(FxtAdaptError, FloatingPointError):
    pass


class BadVariantParams(FxtAdaptError, ValueError):
    pass


class PitchSingularity(FxtAdaptError, ValueError):
    """Euler kinematics evaluated too close to |pitch| = pi/2."""


class NonPositiveSigma(FxtAdaptError, ValueError):
    pass


class InvalidK(FxtAdaptError, ValueError):
    pass


class PreconditionViolated(FxtAdaptError, ValueError):
    pass


class ConfigError(FxtAdaptError, ValueError):
    """Scenario configuration failed validation."""
