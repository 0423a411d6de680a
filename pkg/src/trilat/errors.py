"""Exception types carrying structured diagnostics."""


class TrilatError(Exception):
    """Base class; ``code`` names the condition for machine-readable reports."""

    code = "error"

    def __init__(self, message, **details):
        super().__init__(message)
        self.details = details

    def as_dict(self):
        return {"code": self.code, "message": str(self), **self.details}


class ProblemError(TrilatError, ValueError):
    code = "invalid_problem"


class ParseError(ProblemError):
    code = "parse_error"

    def __init__(self, message, line=None, column=None, **details):
        if line is not None:
            message = f"line {line}, column {column}: {message}"
        super().__init__(message, line=line, column=column, **details)


class DegenerateGeometryError(TrilatError):
    """Station/point geometry makes the Jacobian rank deficient."""

    code = "degenerate_geometry"


class DegenerateReductionError(TrilatError):
    """The algebraic elimination cannot be trusted (d = f = 0, or ill-separated roots)."""

    code = "degenerate_reduction"


class NoCandidatesError(TrilatError):
    code = "no_candidates"


class IdenticallySatisfiedError(TrilatError):
    """A compatibility polynomial is identically zero."""

    code = "identically_satisfied"


class IllConditionedError(TrilatError):
    code = "ill_conditioned"


class ConvergenceError(TrilatError):
    code = "no_convergence"
