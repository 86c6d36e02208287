"""Exception hierarchy shared by all modules.

The CLI maps :class:`ValidationError` to exit code 2 and
:class:`ConstructionError` to exit code 3.
"""


class ForgeError(Exception):
    pass


class ValidationError(ForgeError, ValueError):
    """Input data violates a documented invariant."""


class OracleError(ValidationError):
    """A deficiency oracle fails the axioms it is supposed to satisfy."""


class ConstructionError(ForgeError, RuntimeError):
    """A construction could not be completed (e.g. radii underflow)."""


class InvariantError(ForgeError, AssertionError):
    """A property guaranteed by construction was observed to fail.

    This always indicates a bug, never bad input.
    """
