"""Exception types shared across the package."""


class DegenerateDominantEigenvalue(RuntimeError):
    """The transfer matrix has a (nearly) degenerate dominant eigenvalue.

    Block reduced density matrices are ill-defined in this case, e.g. for
    GHZ-type fixed points or symmetry-degenerate states.
    """


class CapacityExceeded(RuntimeError):
    """A dense construction or enumeration would exceed its configured cap."""


class TruncationError(RuntimeError):
    """Discarded spectral weight in the renormalized block basis is too large."""


class ConvergenceError(RuntimeError):
    """Iterative solver failed to converge within its budget.

    Carries the energy trace of the run in ``trace`` when raised by the
    imaginary-time evolution.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace
