"""Exception hierarchy shared by all modules."""


class QuasinvError(Exception):
    """Base class for every error raised by this package."""


class InputError(QuasinvError, ValueError):
    """Invalid arguments: wrong dimensions, out-of-range parameters, bad files."""


class CappedInputError(InputError):
    """An exponent would exceed the overflow cap (log-scale 700)."""


class KernelValidationError(InputError):
    """A finite kernel violates positivity, symmetry or conservativeness."""

    def __init__(self, failed, details=""):
        self.failed = tuple(failed)
        msg = "kernel invariant(s) violated: " + ", ".join(self.failed)
        if details:
            msg += f" ({details})"
        super().__init__(msg)


class ResolutionError(QuasinvError):
    """Quadrature grid too coarse for the requested accuracy."""


class DegenerateEstimateError(QuasinvError):
    """Density-ratio estimate is unusable (bad bandwidth or tiny effective sample size)."""


class InfeasibleError(QuasinvError):
    """Endpoint constraint could not be driven below the feasibility threshold."""
