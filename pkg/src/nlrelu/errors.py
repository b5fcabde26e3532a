"""Exception types shared across the package."""

from __future__ import annotations


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class NonFiniteError(FloatingPointError):
    """A NaN or Inf appeared where only finite values are allowed.

    ``where`` names the layer or operation that produced it.
    """

    def __init__(self, where: str, detail: str = ""):
        self.where = where
        msg = f"non-finite values produced by {where}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class DatasetError(IOError):
    """A dataset file is missing, truncated or malformed."""


class ConfigError(ValueError):
    """Invalid user configuration (bad key, bad value, incompatible preset)."""
