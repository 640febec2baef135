"""Exception types shared across the package."""


class QuenchLabError(Exception):
    """Base class for all package errors."""


class ValidationError(QuenchLabError, ValueError):
    """Bad parameters or configuration, detected before any computation."""


class SingularPointError(QuenchLabError, ValueError):
    """Evaluation requested at (or numerically at) the singular point 0."""


class BranchDomainError(QuenchLabError, ValueError):
    """A value lies outside the image of the requested inverse branch."""


class ConvergenceError(QuenchLabError, ArithmeticError):
    """An iterative solver failed; ``residual`` holds the last residual."""

    def __init__(self, message, residual=float("nan")):
        super().__init__(f"{message} (residual={residual:.3e})")
        self.residual = residual


class WindowRangeError(QuenchLabError, IndexError):
    """Access outside the realized index range of an OmegaWindow."""


class OrbitError(QuenchLabError, ArithmeticError):
    """An orbit came within the singularity tolerance of 0."""


class StructureError(QuenchLabError, ArithmeticError):
    """A pulled-back cell left the interval its itinerary requires."""


class GlueValidationError(ValidationError):
    """Constructed GH map violates a required condition.

    ``condition`` names the check and ``witness`` is a point where it fails.
    """

    def __init__(self, condition, witness, detail=""):
        super().__init__(f"GH map check failed: {condition} at x={witness!r} {detail}".strip())
        self.condition = condition
        self.witness = witness
