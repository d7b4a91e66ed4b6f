"""Exception hierarchy.  Every numerical failure derives from NumericalError."""


class HalfGeoError(Exception):
    pass


class NumericalError(HalfGeoError):
    """A computation failed; the CLI maps these to exit code 2."""


class NonConvergence(NumericalError):
    pass


class DegenerateGradient(NumericalError):
    pass


class ResolutionTooCoarse(NumericalError):
    pass


class DriftExceeded(NumericalError):
    pass


class Disconnected(NumericalError):
    pass


class BVPNonConvergence(NumericalError):
    pass


class NoConvergence(NumericalError):
    """Birkhoff shortening ran out of iterations."""


class NotSymmetric(HalfGeoError):
    pass


class EpsilonOutOfRange(HalfGeoError, ValueError):
    pass
