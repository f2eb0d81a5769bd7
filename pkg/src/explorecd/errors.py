"""Exception and warning types raised across the package."""


class ExploreCDError(Exception):
    """Base class for all package errors."""


class UnknownNode(ExploreCDError, IndexError):
    pass


class BudgetExhausted(ExploreCDError):
    pass


class DuplicateQuery(ExploreCDError):
    pass


class NoCandidates(ExploreCDError):
    """Raised by a selection strategy when every node has been queried."""


class InvariantViolation(ExploreCDError, ValueError):
    pass


class ParseError(ExploreCDError, ValueError):
    def __init__(self, path, lineno, message):
        self.path = str(path)
        self.lineno = lineno
        super().__init__(f"{self.path}:{lineno}: {message}")


class InconsistentDims(ParseError):
    pass


class MissingFile(ExploreCDError, FileNotFoundError):
    pass


class DegenerateInput(ExploreCDError, ValueError):
    pass


class ShapeMismatch(ExploreCDError, ValueError):
    pass


class NonFiniteLoss(ExploreCDError, FloatingPointError):
    pass


class ConvergenceWarning(UserWarning):
    pass


class DatasetWarning(UserWarning):
    pass
