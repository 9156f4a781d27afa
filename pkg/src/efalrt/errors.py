"""Exception types raised by the library."""


class EfaLrtError(Exception):
    """Base class for all library errors."""


class InvalidInputError(EfaLrtError, ValueError):
    pass


class DegenerateColumnError(InvalidInputError):
    def __init__(self, column: int):
        self.column = column
        super().__init__(f"column {column} has zero sample variance")


class NotPositiveDefiniteError(EfaLrtError, ValueError):
    def __init__(self, pivot: int, message: str | None = None):
        self.pivot = pivot
        super().__init__(message or f"matrix is not positive definite (pivot {pivot})")


class SingularCorrelationError(NotPositiveDefiniteError):
    pass


class ModelSaturatedError(EfaLrtError, ValueError):
    """Degrees of freedom of the requested factor model are not positive."""


class UnsupportedCombinationError(EfaLrtError, ValueError):
    pass
