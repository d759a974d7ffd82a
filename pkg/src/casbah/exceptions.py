class CasbahError(Exception):
    """Base class for errors raised by this package."""


class InputError(CasbahError, ValueError):
    """Invalid arguments, malformed data files or inconsistent dimensions."""


class NumericalError(CasbahError, ArithmeticError):
    """A linear-algebra or sampling step could not be completed."""
