"""Exception hierarchy shared across the package."""


class DTSurvError(Exception):
    """Base class for all package errors."""


class AdmissibilityError(DTSurvError):
    """Summed cause-specific hazards reach or exceed one at some time."""

    def __init__(self, t, total):
        self.t = t
        self.total = total
        super().__init__(
            f"inadmissible hazards at t={t}: sum over event types is {total:.6g} >= 1"
        )


class DataLoadError(DTSurvError):
    """Input file could not be parsed into a dataset."""

    def __init__(self, message, row=None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class EstimabilityError(DTSurvError):
    """Some (event type, time) cells cannot support estimation.

    ``cells`` lists the offending ``(j, t_label)`` pairs.
    """

    def __init__(self, message, cells=()):
        self.cells = list(cells)
        super().__init__(message)


class SeparationError(DTSurvError):
    """Coefficients diverge, indicating (quasi-)complete separation."""


class ConvergenceError(DTSurvError):
    """An iterative solver stopped before meeting its tolerance."""

    def __init__(self, message, report=None):
        self.report = report
        super().__init__(message)


class RootError(DTSurvError):
    """A root bracket could not be established."""
