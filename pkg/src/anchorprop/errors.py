"""Exception types shared across the package.

Every declared error path raises one of these, so callers can catch the
base class or a specific failure mode.
"""

from __future__ import annotations


class EngineError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(EngineError, ValueError):
    """Operand dimensions are inconsistent."""


class NumericError(EngineError, ValueError):
    """Non-finite values where finite ones are required."""


class ParameterError(EngineError, ValueError):
    """A configuration or argument value is out of its valid range."""


class DegenerateVectorError(EngineError, ValueError):
    """A vector with (near-)zero norm where a direction is required."""


class BoundsError(EngineError, ValueError):
    """A coordinate lies outside the valid image or grid region."""


class EmptyContextError(EngineError, ValueError):
    """Attention was asked to run with no keys at all."""


class CompatibilityError(EngineError, ValueError):
    """Artifacts built from different configurations were mixed."""


class JobError(EngineError, RuntimeError):
    """A parallel worker failed; the message names the failed segment."""


class ContainerFormatError(EngineError, ValueError):
    """A tensor container file has an unknown magic, version, or dtype."""
