"""Exception hierarchy shared by all modules."""


class SchifferLabError(Exception):
    """Base class for every error raised by the package."""


class NumericalFailure(SchifferLabError):
    """A numerical kernel could not deliver its contract."""


class ConfigError(SchifferLabError):
    """An experiment configuration is malformed."""


# geometry
class ImmersionViolation(NumericalFailure):
    pass


class SelfIntersection(NumericalFailure):
    pass


class NonPositiveTarget(ValueError, SchifferLabError):
    pass


class DegenerateDirection(ValueError, SchifferLabError):
    pass


class GridMismatch(ValueError, SchifferLabError):
    pass


# bessel
class ConvergenceFailure(NumericalFailure):
    pass


# fem
class MeshFailure(NumericalFailure):
    pass


class SolverDivergence(NumericalFailure):
    pass


class SingularMass(NumericalFailure):
    pass


class EmptyCluster(NumericalFailure):
    pass


# shape calculus
class WrongBC(ValueError, SchifferLabError):
    pass


class MissingFlux(ValueError, SchifferLabError):
    pass


class MultipleEigenvalue(NumericalFailure):
    pass


class NonOrthonormalCluster(NumericalFailure):
    pass


class ZeroFlux(NumericalFailure):
    pass


class ModeTrackingFailure(NumericalFailure):
    pass


class SingularOperator(NumericalFailure):
    pass


# flow
class StepFailure(NumericalFailure):
    pass


class LengthMismatch(ValueError, SchifferLabError):
    pass
