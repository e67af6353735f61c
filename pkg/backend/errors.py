"""
Exception hierarchy for the motion-capture fitting engine.

Every error carries a short machine-readable ``code`` and can be rendered as a
record (``to_record``) so the CLI and the API report failures the same way.
"""

from typing import Any, Dict, Optional


class MocapError(Exception):
    """Base class for all engine errors."""

    code = "mocap_error"

    def __init__(self, message: str, **details: Any):
        super().__init__(message)
        self.message = message
        self.details = details

    def to_record(self) -> Dict[str, Any]:
        """Machine-readable error record."""
        record = {"error": self.code, "message": self.message}
        record.update({k: v for k, v in self.details.items() if v is not None})
        return record


class ContractViolationError(MocapError, ValueError):
    """Inputs break a documented precondition (shape, range, missing channel)."""

    code = "contract_violation"


class BehindCameraError(MocapError, ValueError):
    """A point has non-positive depth in the camera frame."""

    code = "behind_camera"


class UnderdeterminedError(MocapError, ValueError):
    """Not enough observations to solve for the unknowns."""

    code = "underdetermined"


class NonFiniteError(MocapError, ArithmeticError):
    """A differentiable primitive produced NaN or inf."""

    code = "non_finite"

    def __init__(self, primitive: str, message: Optional[str] = None):
        super().__init__(
            message or f"non-finite value produced by primitive '{primitive}'",
            primitive=primitive,
        )
        self.primitive = primitive


class ScalingError(MocapError):
    """The static scaling solve of the two-stage pipeline diverged."""

    code = "scaling_failed"


class FitError(MocapError):
    """End-to-end fitting could not produce a session fit."""

    code = "fit_failed"


class SegmentationError(MocapError):
    """No drinking cycle could be segmented from the velocity profile."""

    code = "segmentation_failed"


class AlignmentError(MocapError):
    """Lag search left too little overlap between the two signals."""

    code = "alignment_failed"


class MissingInputError(MocapError, FileNotFoundError):
    """A required input file or directory does not exist."""

    code = "missing_input"

    def __init__(self, path: str, what: str = "input"):
        super().__init__(f"missing {what}: {path}", path=str(path), what=what)
        self.path = str(path)


class MalformedFileError(MocapError):
    """An input file could not be parsed; line/column point at the problem."""

    code = "malformed_file"

    def __init__(
        self,
        path: str,
        reason: str,
        line: Optional[int] = None,
        column: Optional[int] = None,
    ):
        location = ""
        if line is not None:
            location = f":{line}" + (f":{column}" if column is not None else "")
        super().__init__(
            f"{path}{location}: {reason}",
            path=str(path),
            line=line,
            column=column,
        )


class NoTrialsError(MocapError):
    """A stage found no trials to process."""

    code = "no_trials"


# Errors caused by the caller's inputs (CLI exit code 2); everything else is 1.
INPUT_ERRORS = (MissingInputError, MalformedFileError, NoTrialsError, ContractViolationError)
