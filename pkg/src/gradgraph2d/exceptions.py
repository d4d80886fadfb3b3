"""Exception hierarchy shared by every module of the package."""


class GradGraphError(ValueError):
    """Base class for all errors raised by gradgraph2d."""


class InadmissibleEigenvalues(GradGraphError):
    pass


class NoAdmissiblePartner(GradGraphError):
    pass


class StructureViolation(GradGraphError):
    pass


class AdmissibilityLost(GradGraphError):
    pass


class RangeExceeded(GradGraphError):
    pass


class DomainViolation(GradGraphError):
    pass


class ConvexityMargin(GradGraphError):
    pass


class InversionFailure(GradGraphError):
    pass


class Aliasing(GradGraphError):
    pass


class TailDivergence(GradGraphError):
    pass


class InsufficientRings(GradGraphError):
    pass


class NotConverging(GradGraphError):
    pass


class QuadratureStall(GradGraphError):
    pass


class ConfigInvalid(GradGraphError):
    pass


class IoFailure(GradGraphError, OSError):
    pass
