"""
Exception hierarchy shared by every survdisc module.

Each class carries the process exit code the CLI reports for it:
2 for unusable data, 3 for numerical failure.
"""


class SurvDiscError(Exception):
    exit_code = 1


class DataError(SurvDiscError, ValueError):
    """Input data cannot support the requested computation."""

    exit_code = 2


class NumericalError(SurvDiscError, ArithmeticError):
    """A numerical routine failed on otherwise valid input."""

    exit_code = 3


# ---------- data errors ----------


class NonFiniteTime(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class NoEvents(DataError):
    pass


class EmptyControls(DataError):
    pass


class NoCasesAtTime(DataError):
    pass


class EmptyRiskSet(DataError):
    pass


class TooFewSubjects(DataError):
    pass


class NoUsablePairs(DataError):
    pass


class Misaligned(DataError):
    pass


class TooFewPoints(DataError):
    pass


class OutOfDomain(DataError):
    pass


class FoldWithoutEvents(DataError):
    pass


class SchemaError(DataError):
    pass


class ParseError(DataError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


# ---------- numerical errors ----------


class Singular(NumericalError):
    pass


class NotConverged(NumericalError):
    def __init__(self, message, fit=None):
        super().__init__(message)
        self.fit = fit


class DegenerateDenominator(NumericalError):
    pass


class DegenerateDesign(NumericalError):
    pass


class QuadratureFailure(NumericalError):
    pass
