"""Exception hierarchy shared by all solver modules."""


class SlipStabError(Exception):
    """Base class for every error raised by the package."""


# profiles
class DomainTooSmall(SlipStabError):
    pass


class ZeroSlip(SlipStabError):
    pass


class NonRemovableSingularity(SlipStabError):
    pass


# spectral1d
class PotentialNotDecayed(SlipStabError):
    pass


class BoundaryViolation(SlipStabError):
    pass


# rayleigh
class RayleighError(SlipStabError):
    """No unstable Rayleigh mode could be produced from the given guess."""


class NoConvergence(RayleighError):
    pass


class LeftHalfPlane(RayleighError):
    pass


class ContinuationBroken(RayleighError):
    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class BandViolation(SlipStabError):
    pass


class CFLViolation(SlipStabError):
    pass


# heat_robin
class WindowTooLong(SlipStabError):
    pass


# ns2d
class BlowupDetected(SlipStabError):
    pass


# harness
class NoGrowthDetected(SlipStabError):
    pass


class ParameterViolation(SlipStabError):
    pass
