"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Raised for unsupported dimensions or inconsistent parameters."""


class NumericalError(ArithmeticError):
    """Raised when a solver or quadrature fails to reach its tolerance.

    Parameters
    ----------
    message : str
        Human readable description.
    residual : float, optional
        Residual (or error estimate) achieved when the failure was detected.
    diagnostics : dict, optional
        Any extra solver state worth reporting.
    """

    def __init__(self, message, residual=None, diagnostics=None):
        super().__init__(message)
        self.residual = residual
        self.diagnostics = dict(diagnostics or {})
