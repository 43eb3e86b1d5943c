"""Exception hierarchy shared by all varwave modules."""


class VarwaveError(Exception):
    """Base class for every error raised by the package."""


# model
class GammaOutOfRange(VarwaveError):
    pass


class DenominatorNonpositive(VarwaveError):
    pass


class DegenerateDenominator(VarwaveError):
    pass


class SmallnessConditionViolated(VarwaveError):
    """The blow-up smallness condition on beta^{-1}(1) fails (negative discriminant)."""


class EmptyWindow(VarwaveError):
    pass


class NotInBlowupRegion(VarwaveError):
    pass


# geometry
class EmptyGamma0(VarwaveError):
    pass


class NotPositiveDefinite(VarwaveError):
    pass


# assembly
class SingularElement(VarwaveError):
    pass


class DimensionMismatch(VarwaveError):
    pass


# dynamics
class NewtonFailure(VarwaveError):
    """Boundary solve did not converge; the caller should shrink the step."""


# well
class NoBoundaryNodes(VarwaveError):
    pass


# diagnostics
class NegativeG(VarwaveError):
    pass


class TooFewRecords(VarwaveError):
    pass


class NonpositiveEnergy(VarwaveError):
    pass


# config
class ParseError(VarwaveError):
    def __init__(self, message: str, line: int = 0, column: int = 0):
        self.line = line
        self.column = column
        super().__init__(f"line {line}, column {column}: {message}")


class ValidationError(VarwaveError):
    pass
