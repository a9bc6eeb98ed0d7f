"""Exception hierarchy shared by all linreco modules."""


class LinrecoError(Exception):
    """Base class for all linreco errors."""


class ValidationError(LinrecoError):
    """Bad input: malformed text, mismatched dimensions, invalid names."""


class NumericalError(LinrecoError):
    """Numerical failure: singular matrix, tolerance collapse, non-finite data."""
