"""Exception hierarchy shared across the package."""


class WalkcountError(Exception):
    """Base class for all package errors."""


class LayoutError(WalkcountError):
    """Register layout mismatch or invalid register specification."""


class EngineError(WalkcountError):
    """Numerical failure inside the statevector engine (norm drift, non-unitary op)."""


class OrthonormalityError(WalkcountError):
    """Input vectors fail the Gram orthonormality check."""


class ChainValidationError(WalkcountError):
    """Markov chain rejected by the validator; carries the failure list."""

    def __init__(self, failures):
        self.failures = tuple(failures)
        super().__init__("chain validation failed: " + "; ".join(self.failures))


class NumericError(WalkcountError):
    """Iterative numeric routine did not converge; carries the residual."""

    def __init__(self, message, residual=None):
        self.residual = residual
        super().__init__(message if residual is None else f"{message} (residual={residual:.3e})")


class ParameterError(WalkcountError):
    """Argument outside its documented domain."""


class GeometryError(WalkcountError):
    """Search geometry undefined for the given marked set (e.g. everything marked)."""


class SizeError(WalkcountError):
    """Requested computation exceeds a configured size or memory budget."""


class ExperimentError(WalkcountError):
    """Bad experiment configuration or unknown experiment name."""
