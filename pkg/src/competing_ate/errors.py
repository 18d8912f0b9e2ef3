"""Exception hierarchy shared by all modules.

Every error carries an ``exit_code`` so the command-line front end can map
failures to process exit statuses without inspecting messages.
"""


class CompetingATEError(Exception):
    exit_code = 1


class DataError(CompetingATEError):
    """Malformed or out-of-domain input data."""

    exit_code = 3


class SchemaError(DataError):
    pass


class ParseError(DataError):
    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class DomainError(DataError, ValueError):
    """An argument lies outside the domain of an operation."""


class TiedEventTimesError(DataError):
    def __init__(self, ties):
        self.ties = list(ties)
        shown = ", ".join(repr(t) for t in self.ties[:5])
        super().__init__(
            f"dataset has {len(self.ties)} tied event time(s) ({shown}); "
            "rerun with jitter enabled to break ties"
        )


class NumericalError(CompetingATEError):
    exit_code = 4


class SingularInformationError(NumericalError):
    def __init__(self, message, column=None):
        super().__init__(message)
        self.column = column


class NonConvergenceError(NumericalError):
    pass


class RefitError(NumericalError):
    """A refit under perturbed or resampled weights failed."""

    def __init__(self, message, subject=None, diagnostics=None):
        super().__init__(message)
        self.subject = subject
        self.diagnostics = diagnostics or []
