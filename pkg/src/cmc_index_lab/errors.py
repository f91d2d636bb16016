"""Exception hierarchy shared by all modules."""


class LabError(Exception):
    """Base class; ``code`` is the machine-readable tag used by the CLI."""

    code = "error"


class InvalidParameter(LabError, ValueError):
    code = "invalid-parameter"


class WindowViolation(InvalidParameter):
    code = "window-violation"


class NoPositiveSolution(LabError):
    code = "no-positive-solution"


class ClosedFormOnlySpace(LabError):
    code = "closed-form-only space"

    def __init__(self, name):
        super().__init__(f"closed-form-only space: {name!r} carries no embedding map")
        self.space = name


class FamilyMismatch(LabError, ValueError):
    code = "family-space-mismatch"


class MeshError(LabError, ValueError):
    code = "invalid-mesh"


class DegenerateTriangle(MeshError):
    code = "degenerate-triangle"


class MissingGeometry(LabError):
    code = "missing-geometry"


class SolverError(LabError, RuntimeError):
    code = "solver-non-convergence"


class ParseError(LabError, ValueError):
    code = "parse-error"
