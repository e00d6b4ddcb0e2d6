"""Exception hierarchy shared across the package."""


class TrussGNError(Exception):
    """Base class for all package errors."""


class ValidationError(TrussGNError, ValueError):
    """Input failed a precondition check."""


class WidthMismatchError(ValidationError):
    """Attribute widths do not match the wiring of a network."""


class DegenerateError(TrussGNError):
    """Point set admits no triangulation (all points collinear)."""


class MechanismError(TrussGNError):
    """Truss admits a zero-frequency motion."""


class NotConstrainedError(MechanismError):
    """Boundary conditions admit rigid-body motion."""


class GenerationFailed(TrussGNError):
    """No well-constrained truss found within the retry budget."""


class ZeroVarianceError(TrussGNError, ValueError):
    """Targets (or regressors) have zero variance."""


class DivergenceError(TrussGNError):
    """Training loss blew up beyond the divergence guard."""


class StaleTapeError(TrussGNError):
    """Activation tape was recorded against different parameter values."""
