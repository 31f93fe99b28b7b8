"""
Exception hierarchy for CDINet.

Every error raised on purpose by the package derives from CDINetError so
callers (and the CLI) can catch package failures in one place.
"""

from __future__ import annotations

from typing import Sequence


class CDINetError(Exception):
    """Base class for all package errors."""


class ConfigurationError(CDINetError, ValueError):
    """A block, module or experiment was configured inconsistently."""


class ShapeError(CDINetError, ValueError):
    """Tensors that must agree in shape do not."""

    @classmethod
    def mismatch(cls, what: str, first: Sequence[int], second: Sequence[int]) -> ShapeError:
        """Build an error that reports both offending shapes."""
        return cls(f"{what}: shape {tuple(first)} does not match {tuple(second)}")


class PretrainedWeightsError(CDINetError, RuntimeError):
    """A backbone weight archive is missing, corrupt or incompatible."""


class DataError(CDINetError, RuntimeError):
    """Dataset files are missing, unreadable or inconsistent."""


class TrainingDivergedError(CDINetError, RuntimeError):
    """The optimisation produced a non-finite loss."""
