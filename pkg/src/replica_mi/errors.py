"""Exception types shared by all modules."""


class InvalidArgument(ValueError):
    """Malformed or out-of-range input."""


class DomainError(ValueError):
    """Transform evaluated outside its domain (e.g. on the spectrum support)."""


class NumericalFailure(ArithmeticError):
    """A numerical routine produced a non-finite or non-convergent result."""


class UnsupportedOperation(NotImplementedError):
    """Operation not defined for the given object kind."""
