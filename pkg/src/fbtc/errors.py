"""Exception hierarchy.

Every error carries a stable ``code`` string, which is what the CLI reports in
its machine-readable error JSON.
"""


class FBTCError(Exception):
    code = "FBTCError"

    def __init__(self, message="", *, trajectory_id=None, stage=None):
        super().__init__(message)
        self.trajectory_id = trajectory_id
        self.stage = stage

    def __str__(self):
        msg = super().__str__()
        prefix = []
        if self.stage is not None:
            prefix.append(f"stage={self.stage}")
        if self.trajectory_id is not None:
            prefix.append(f"id={self.trajectory_id}")
        if prefix:
            return f"[{', '.join(prefix)}] {msg}"
        return msg

    def to_dict(self):
        out = {"error": self.code, "message": super().__str__()}
        if self.stage is not None:
            out["stage"] = self.stage
        if self.trajectory_id is not None:
            out["id"] = str(self.trajectory_id)
        return out


class TrajectoryError(FBTCError, ValueError):
    code = "InvalidTrajectory"


class LengthMismatchError(TrajectoryError):
    code = "LengthMismatch"


class TooShortError(TrajectoryError):
    code = "TooShort"


class NonMonotoneTimesError(TrajectoryError):
    code = "NonMonotoneTimes"


class NonFiniteValueError(TrajectoryError):
    code = "NonFiniteValue"


class DegenerateTimeSpreadError(FBTCError, ValueError):
    code = "DegenerateTimeSpread"


class MidpointOutOfRangeError(FBTCError, ValueError):
    code = "MidpointOutOfRange"


class AllColumnsConstantError(FBTCError, ValueError):
    code = "AllColumnsConstant"


class InvalidKError(FBTCError, ValueError):
    code = "InvalidK"


class IsolatedPointError(FBTCError, ValueError):
    code = "IsolatedPoint"


class EigenFailureError(FBTCError, RuntimeError):
    code = "EigenFailure"


class ParseError(FBTCError, ValueError):
    code = "ParseError"

    def __init__(self, message="", *, row=None, column=None, **kwargs):
        super().__init__(message, **kwargs)
        self.row = row
        self.column = column

    def to_dict(self):
        out = super().to_dict()
        if self.row is not None:
            out["row"] = self.row
        if self.column is not None:
            out["column"] = self.column
        return out


class DatasetValidationError(FBTCError, ValueError):
    """Several trajectories in one input failed validation."""

    code = "InvalidTrajectories"

    def __init__(self, failures):
        self.failures = list(failures)
        lines = [f"{tid}: {err.code}: {err.args[0] if err.args else ''}" for tid, err in self.failures]
        super().__init__(f"{len(self.failures)} invalid trajectories; " + "; ".join(lines))

    def to_dict(self):
        out = super().to_dict()
        out["failures"] = [
            {"id": str(tid), "error": err.code, "message": err.args[0] if err.args else ""}
            for tid, err in self.failures
        ]
        return out
