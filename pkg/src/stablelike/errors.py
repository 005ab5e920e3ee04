"""Exception types shared across the package."""


class ParameterError(ValueError):
    """A numeric argument is outside its admissible domain."""
