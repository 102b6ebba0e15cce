"""Exception hierarchy shared across the toolkit."""


class ZvnavError(Exception):
    """Base class for all toolkit errors."""


class DataFormatError(ZvnavError):
    """Malformed input file (CSV/JSON). Carries a line number when known."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        prefix = ""
        if path is not None:
            prefix += f"{path}"
        if line is not None:
            prefix += f":{line}"
        super().__init__(f"{prefix}: {message}" if prefix else message)


class KinematicsError(ZvnavError):
    """Physically or numerically infeasible motion (e.g. rotation per sample > pi)."""


class FilterDivergenceError(ZvnavError):
    """Non-finite state encountered while running the filter."""

    def __init__(self, message, step=None):
        self.step = step
        super().__init__(message)


class TrainingDivergedError(ZvnavError):
    """Training loss became non-finite."""
