"""Exception hierarchy shared by all modules."""


class SimError(Exception):
    """Base class for every error raised by stablesim."""


class NonSquareError(SimError, ValueError):
    pass


class NoConvergenceError(SimError, ArithmeticError):
    pass


class SingularError(SimError, ArithmeticError):
    pass


class NotApplicableError(SimError, ValueError):
    pass


class DimensionMismatchError(SimError, ValueError):
    pass


class ShapeMismatchError(DimensionMismatchError):
    pass


class MatrixParseError(SimError, ValueError):
    pass


class UnstableParametersError(SimError, ValueError):
    pass


class AllDivergedError(SimError, ArithmeticError):
    pass


class NotScalarError(SimError, ValueError):
    pass


class GraphConsumedError(SimError, RuntimeError):
    pass


class VariantMismatchError(SimError, ValueError):
    pass


class BadConfigError(SimError, ValueError):
    pass


class NonFiniteError(SimError, ArithmeticError):
    """Training produced a NaN/Inf loss.

    ``step`` is the 1-based step at which the loss went non-finite and
    ``model`` holds the last parameters that still gave a finite loss.
    """

    def __init__(self, step, model=None, history=None):
        super().__init__(f"non-finite loss at step {step}")
        self.step = step
        self.model = model
        self.history = history


class PPMError(SimError, ValueError):
    pass


class BadMagicError(PPMError):
    pass


class BadMaxvalError(PPMError):
    pass


class TruncatedError(PPMError):
    pass


class TooSmallError(SimError, ValueError):
    pass
