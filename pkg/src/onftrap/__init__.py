"""Optical-nanofiber two-color atom trap: modes, potentials, dynamics, signal analysis."""

from importlib.metadata import PackageNotFoundError, version as _version

try:
    __version__ = _version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

from .errors import (  # noqa: E402
    NumericalError,
    OnfTrapError,
    ValidationError,
)

__all__ = ["__version__", "NumericalError", "OnfTrapError", "ValidationError"]
