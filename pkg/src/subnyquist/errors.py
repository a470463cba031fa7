"""Exception hierarchy shared by every module of the package."""


class SubNyquistError(Exception):
    """Base class for all errors raised by :mod:`subnyquist`."""


class StructuralError(SubNyquistError, ValueError):
    """Input has the wrong shape, symmetry or is otherwise malformed."""


class ConfigurationError(SubNyquistError, ValueError):
    """A sampler, filter or experiment configuration violates its rules."""


class BoundsError(SubNyquistError, IndexError):
    """A signal is too short for the requested sampling pattern."""

    def __init__(self, message, required=None):
        super().__init__(message)
        self.required = required


class NumericalError(SubNyquistError, ArithmeticError):
    """A numerical routine failed (non-convergence, loss of precision)."""

    def __init__(self, message, iterations=None):
        super().__init__(message)
        self.iterations = iterations


class SingularityError(NumericalError):
    """A matrix that must be inverted is (numerically) rank deficient.

    Attributes
    ----------
    condition : float
        Estimated 2-norm condition number of the offending matrix.
    """

    def __init__(self, message, condition=float("inf")):
        super().__init__(message)
        self.condition = condition


class DegenerateSubspaceError(NumericalError):
    """Root-MUSIC found fewer admissible roots than the model order."""

    def __init__(self, message, found=0, required=0):
        super().__init__(message)
        self.found = found
        self.required = required


class ArtifactIOError(SubNyquistError, OSError):
    """Reading or writing an input/output file failed; the message names the path."""
