"""Exception hierarchy.

User-facing input problems derive from :class:`InputError`; failures of the
numerical machinery derive from :class:`NumericalError`.  The CLI maps these
to exit codes 1 and 2 respectively.
"""


class QpdlmError(Exception):
    pass


class InputError(QpdlmError, ValueError):
    """Malformed or inconsistent input data or arguments."""


class PanelError(InputError):
    pass


class NumericalError(QpdlmError, ArithmeticError):
    """A fit or transform could not be carried out numerically."""


class InsufficientSupportError(NumericalError):
    pass


class RankDeficiencyError(NumericalError):
    def __init__(self, columns):
        self.columns = list(columns)
        super().__init__("rank-deficient design; collinear columns: " + ", ".join(self.columns))


class ConvergenceError(NumericalError):
    pass
