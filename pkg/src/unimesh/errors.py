"""Exception hierarchy shared across the package."""


class UnimeshError(Exception):
    """Base class for all errors raised by unimesh."""


class NonUniqueProjection(UnimeshError):
    pass


class NoConvergence(UnimeshError):
    pass


class DegenerateProjection(UnimeshError):
    pass


class OnBoundary(UnimeshError):
    pass


class VertexOnBoundary(UnimeshError):
    pass


class EmptySubmesh(UnimeshError):
    pass


class PointNotInSubmesh(UnimeshError):
    pass


class InvalidElement(UnimeshError):
    """An isoparametric element has a nonpositive Jacobian.

    Usually the time step is too large for the mesh spacing, so that the
    boundary travels too far within one interval.
    """


class SingularJacobian(InvalidElement):
    pass


class SingularMatrix(UnimeshError):
    pass


class PointOutside(UnimeshError):
    pass


class NewtonFail(UnimeshError):
    pass


class UnknownTableau(UnimeshError, KeyError):
    pass


class NotStifflyAccurate(UnimeshError):
    pass


class NonConstantDiagonal(UnimeshError):
    pass


class OutOfBranch(UnimeshError):
    pass


EiInverseDomain = OutOfBranch


class IntervalConditionViolated(UnimeshError):
    pass


class MeshMapDiscontinuity(UnimeshError):
    pass
