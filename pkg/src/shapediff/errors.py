"""Exception types raised across the package."""


class ShapeDiffError(Exception):
    """Base class for all package errors."""


class ShapeMismatch(ShapeDiffError, ValueError):
    pass


class UnsupportedNode(ShapeDiffError, NotImplementedError):
    pass


class InvertedCell(ShapeDiffError):
    def __init__(self, cell, det):
        super().__init__(f"cell {cell} has non-positive Jacobian determinant {det:.3e}")
        self.cell = cell
        self.det = det


class QuadratureError(ShapeDiffError, ValueError):
    pass


class SingularMatrix(ShapeDiffError):
    pass


class NonConvergence(ShapeDiffError):
    def __init__(self, message, trace=()):
        super().__init__(message)
        self.trace = list(trace)


class MeshFormatError(ShapeDiffError, ValueError):
    pass


class BoundaryMarkerError(ShapeDiffError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "unknown boundary marker"
