"""Exception types shared across modules."""


class NumericalError(RuntimeError):
    """A numerical computation failed or produced an invalid result."""


class EigensolverError(NumericalError):
    """The generalized eigensolver did not converge or failed its residual check.

    Attributes
    ----------
    residual : float or None
        Largest relative column residual observed, when available.
    """

    def __init__(self, message, residual=None):
        self.residual = residual
        if residual is not None:
            message = f"{message} (max relative residual {residual:.3e})"
        super().__init__(message)


class DataMismatchError(ValueError):
    """Inputs that must describe the same mesh or document are inconsistent."""
