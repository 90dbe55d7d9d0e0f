"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class WorkbenchError(Exception):
    """Base class for every error raised by the package."""


class ContextError(WorkbenchError):
    """Operands live in different algebras or have mismatched shapes."""


class NotQuasiInvertible(WorkbenchError):
    def __init__(self, sigma_min: float, threshold: float):
        self.sigma_min = sigma_min
        self.threshold = threshold
        super().__init__(
            f"1 - a is numerically singular: sigma_min={sigma_min:.3e} <= {threshold:.3e}"
        )


class SeriesDiverges(WorkbenchError):
    def __init__(self, norm: float):
        self.norm = norm
        super().__init__(f"Neumann series needs ||a|| < 1, got {norm:.6g}")


class PerturbationTooLarge(WorkbenchError):
    def __init__(self, norm: float):
        self.norm = norm
        super().__init__(f"||b o c'|| = {norm:.6g} >= 1; perturbation too large")


class NotIdempotent(WorkbenchError):
    def __init__(self, defect: float, threshold: float):
        self.defect = defect
        self.threshold = threshold
        super().__init__(f"||p^2 - p|| = {defect:.3e} exceeds {threshold:.3e}")


class NotAQuasiInversePair(WorkbenchError):
    def __init__(self, defect: float, threshold: float):
        self.defect = defect
        self.threshold = threshold
        super().__init__(f"||a o b|| = {defect:.3e} exceeds {threshold:.3e}")


class InvalidTrace(WorkbenchError):
    """The trace functional is not tracial or not faithful on the context."""


class ParseError(WorkbenchError):
    def __init__(self, message: str, row: int | None = None, col: int | None = None):
        self.row = row
        self.col = col
        where = ""
        if row is not None:
            where = f" (row {row}" + (f", col {col})" if col is not None else ")")
        super().__init__(message + where)


class NotAGroup(WorkbenchError):
    def __init__(self, axiom: str, detail: str = ""):
        self.axiom = axiom
        super().__init__(f"group axiom failed: {axiom}" + (f": {detail}" if detail else ""))


class NumericalFailure(WorkbenchError):
    """A LAPACK routine failed to converge."""


class TruncationError(WorkbenchError):
    """Support of a Z-sequence does not fit in the circulant window."""


class DomainError(WorkbenchError):
    """Exponent outside the admissible range."""


class GridError(WorkbenchError):
    """Quadrature grid parameters out of the numerically safe range."""


class WindowError(WorkbenchError):
    def __init__(self, lost: float):
        self.lost = lost
        super().__init__(f"dilation pushes {100 * lost:.2f}% of the mass outside the grid window")


class OracleResolutionError(WorkbenchError):
    def __init__(self, B: float, tail: float):
        self.B = B
        self.tail = tail
        super().__init__(f"b-window B={B} leaves Gaussian tail mass {tail:.3e} > 1e-8")


class ConventionError(WorkbenchError):
    """Numerical Haar/modular-function test disagrees with the coded convention."""


class StudyInconclusive(WorkbenchError):
    def __init__(self, message: str, report=None):
        self.report = report
        super().__init__(message)


class NotYetResolved(WorkbenchError):
    def __init__(self, message: str, value: float | None = None):
        self.value = value
        super().__init__(message)
