"""Exception types raised across the package."""


class ArtiflowError(Exception):
    """Base class for all package errors."""


class SceneError(ArtiflowError):
    """Invalid object description or kinematic structure."""


class SceneParseError(SceneError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f"line {line}" + (f", column {column}" if column is not None else "") + ": "
        super().__init__(where + message)


class StateError(ArtiflowError):
    """Joint state does not match the object or violates limits."""


class DegenerateGeometryError(ArtiflowError):
    """Geometry makes the requested quantity undefined."""


class ContactError(ArtiflowError):
    """Contact inconsistent with the kinematic model."""


class ContactFailed(ArtiflowError):
    """No feasible grasp point exists."""


class EstimatorDegenerate(ArtiflowError):
    """Flow estimate too weak or too sparse near the contact to pick a direction."""
