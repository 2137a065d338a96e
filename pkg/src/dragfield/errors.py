"""Exception types shared across the engine."""


class DragfieldError(Exception):
    """Base class for all engine errors."""


class ShapeError(DragfieldError):
    """Operand shapes are incompatible."""


class NumericError(DragfieldError):
    """A value became NaN or infinite; finite values are a contract."""


class BoundsError(DragfieldError):
    """A continuous sample position left the field; callers clamp explicitly."""


class TrainingDivergedError(DragfieldError):
    """Tracker training loss blew up; retry with a smaller step size."""


class ValidationError(DragfieldError):
    """A scenario or config violates its schema; carries per-field messages."""

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class DegeneratePatchError(DragfieldError):
    """A supervision patch was clipped to nothing."""


class UnsupportedScenarioError(DragfieldError):
    """The scenario lacks what the operation needs (e.g. semantic oracles)."""


class ConvergedSignal(DragfieldError):
    """Handle point sits on its target; not a failure, the point is skipped."""
