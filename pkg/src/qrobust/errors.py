"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: input-side problems (bad files, bad
dimensions, malformed QASM) exit with 2, numerical non-convergence with 3.
"""


class QRobustError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatch(QRobustError, ValueError):
    """Operands have incompatible dimensions or qubit counts."""


class ValidationError(QRobustError, ValueError):
    """A value violates a structural invariant (norm, PSD, completeness...)."""


class QasmError(QRobustError, ValueError):
    """Syntax or semantic error in an OpenQASM 2.0 source."""

    def __init__(self, message: str, line: int | None = None, col: int | None = None):
        self.line = line
        self.col = col
        loc = f" (line {line}, col {col})" if line is not None else ""
        super().__init__(message + loc)


class UnsupportedConstruct(QasmError):
    """A legal OpenQASM 2.0 construct outside the supported subset."""


class DenseCapExceeded(QRobustError, ValueError):
    """Model dimension exceeds the dense-path cap; use the tensor-network path."""


class ConvergenceError(QRobustError, RuntimeError):
    """An iterative solver failed to certify a result.

    Carries the best available estimates so callers can report them.
    """

    def __init__(self, message: str, **details):
        self.details = details
        super().__init__(message)
