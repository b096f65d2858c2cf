"""Exception types shared across the package."""

from __future__ import annotations


class ProtoExtractError(Exception):
    """Base class for all package errors."""


class TransportError(ProtoExtractError, ValueError):
    """Invalid input to an optimal-transport routine."""


class PrototypeFitError(ProtoExtractError):
    """Prototype fitting failed (empty class, divergence)."""


class ModelError(ProtoExtractError, ValueError):
    """Invalid training data or model/input dimension mismatch."""


class CounterfactualError(ProtoExtractError):
    """A counterfactual could not be produced for ``x``."""

    def __init__(self, message: str, x=None):
        super().__init__(message)
        self.x = x


class DataError(ProtoExtractError, ValueError):
    """Malformed dataset, schema or split."""


class ConfigError(ProtoExtractError, ValueError):
    """Invalid experiment configuration; ``path`` names the offending key."""

    def __init__(self, message: str, path: str | None = None):
        super().__init__(message)
        self.path = path
