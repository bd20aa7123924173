"""Exception types raised across the package."""


class DomainError(ValueError):
    """A closed-form quantity overflowed or left its valid domain."""


class NumericalError(ArithmeticError):
    """A filter or smoother recursion broke down.

    ``time_index`` is the zero-based row of the panel where it happened.
    """

    def __init__(self, message, time_index=None):
        super().__init__(message)
        self.time_index = time_index


class EstimationError(RuntimeError):
    """Every start of a fit (or every grid point) failed."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = list(diagnostics or [])


class PanelFormatError(ValueError):
    """A panel file violates the CSV layout.

    ``row`` is the 1-based line number in the file, ``column`` the header
    name of the offending cell when there is one.
    """

    def __init__(self, message, row=None, column=None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.row = row
        self.column = column
