"""Exception types shared across the package."""


class LatentGuardError(Exception):
    """Base class for all package errors."""


class InvalidInputError(LatentGuardError, ValueError):
    """An argument violates a documented precondition."""


class NumericError(LatentGuardError, ArithmeticError):
    """A computation produced a non-finite value."""


class LifecycleError(LatentGuardError, KeyError):
    """A latent vector required by an operation is missing from the model."""


class StreamStalledError(LatentGuardError, RuntimeError):
    """The market has no active ads, so no event can be generated."""


class RhoSearchFailedError(LatentGuardError, RuntimeError):
    """Every candidate instance of the bound search diverged."""


class AllDivergedError(LatentGuardError, RuntimeError):
    """Every instance of a training cycle diverged."""
