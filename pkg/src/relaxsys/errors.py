"""Exception hierarchy shared by all modules."""


class RelaxsysError(Exception):
    """Base class for domain failures raised by this package."""


class SingularShift(RelaxsysError):
    """sI - A is singular at the requested evaluation point."""


class SingularTransform(RelaxsysError):
    """A similarity transform is not (numerically) invertible."""


class NotMinimal(RelaxsysError):
    """The realization is not controllable and observable."""


class NotRelaxation(RelaxsysError):
    """The realization does not satisfy the relaxation-system conditions."""


class NotCertified(RelaxsysError):
    """A controller was requested without a passing relaxation certificate."""


class SingularA(RelaxsysError):
    """A has an eigenvalue at (or numerically near) the origin."""


class SingularG1(RelaxsysError):
    pass


class AlgebraicLoop(RelaxsysError):
    """I + D K is singular, so the feedback interconnection is ill-posed."""


class UnstableSystem(RelaxsysError):
    pass


class DivergentTrace(RelaxsysError):
    pass


class ValidationError(RelaxsysError):
    pass


class ParseError(ValidationError):
    def __init__(self, line, message):
        self.line = line
        self.message = message
        super().__init__(f"line {line}: {message}")


class NotResistivelyGrounded(RelaxsysError):
    """Some internal node has no resistive path to a port terminal."""


class NotPlanar(RelaxsysError):
    """The supplied rotation system does not describe a planar embedding."""
