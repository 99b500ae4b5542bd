"""Exception types shared across the package."""


class HolderBoundsError(Exception):
    """Base class for every error raised by this package."""


class EmptySetError(HolderBoundsError):
    pass


class NonpositiveDerivativeError(HolderBoundsError):
    pass


class NoConvergenceError(HolderBoundsError):
    pass


class DimensionTooLargeError(HolderBoundsError):
    pass


class CenterNotInSetError(HolderBoundsError):
    pass


class CenterNotOptimalError(HolderBoundsError):
    pass


class NoSlaterError(HolderBoundsError):
    pass


class ActiveSetTooLargeError(HolderBoundsError):
    pass


class InfeasibleError(HolderBoundsError):
    pass


class UnboundedError(HolderBoundsError):
    pass


class NoCertificateError(HolderBoundsError):
    pass


class DisjointnessViolationError(HolderBoundsError):
    pass


class InstanceParseError(HolderBoundsError):
    pass


class SolutionNotUniqueError(HolderBoundsError):
    pass


class PostconditionError(HolderBoundsError):
    pass
