"""Exception types shared across the package."""


class FormatError(ValueError):
    """A binary file does not conform to its expected layout.

    The message includes the byte offset of the first inconsistency
    whenever it is known.
    """


class DegenerateGradientError(ValueError):
    """The input gradient has zero norm, so no step direction exists."""
