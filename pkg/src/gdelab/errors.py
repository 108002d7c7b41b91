"""Exception hierarchy shared by all gdelab modules."""


class GDEError(Exception):
    """Base class for numerical and contract errors raised by gdelab."""


class PoleProximity(GDEError):
    pass


class UnknownLabel(GDEError):
    pass


class LowerHalfPlane(GDEError):
    pass


class QuadratureFailure(GDEError):
    pass


class DistributionalKernel(GDEError):
    pass


class NotInstantaneous(GDEError):
    pass


class BoundaryRegimeViolation(GDEError):
    pass


class StepFailure(GDEError):
    pass


class SingularSolve(GDEError):
    pass


class NotRankOne(GDEError):
    pass


class OutOfContour(GDEError):
    pass


class WindowTooNarrow(GDEError):
    pass


class InsufficientDamping(GDEError):
    pass


class QuadratureBreakdown(GDEError):
    pass


class VanishingDiagonal(GDEError):
    pass


class NoConvergence(GDEError):
    pass


class MultipleRoots(GDEError):
    pass


class DerivativeUnstable(GDEError):
    pass


class BranchViolation(GDEError):
    pass


class RegionExit(GDEError):
    pass


class NotRegulated(GDEError):
    pass


class NotApplicable(GDEError):
    pass


class WindowUnstable(GDEError):
    pass


class ConfigInvalid(GDEError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))
