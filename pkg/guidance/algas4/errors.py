"""Exception hierarchy for the ALGAS4 simulator.

Saturation, NoRuleFired and Warmup are statuses and never raise.
"""

from typing import List, Optional


class Algas4Error(Exception):
    """Base class for simulator errors."""


class ConfigurationError(Algas4Error, ValueError):
    """A unit was constructed with invalid parameters."""


class ConfigError(ConfigurationError):
    """A run configuration file could not be loaded or validated.

    Carries every violation found, each formatted as ``"key.path: message"``.
    """

    def __init__(self, message: str, errors: Optional[List[str]] = None):
        self.errors = list(errors or [])
        if self.errors:
            message = message + "\n" + "\n".join(f"  - {e}" for e in self.errors)
        super().__init__(message)


class FormatMismatchError(Algas4Error, TypeError):
    """Two fixed-point operands do not share a Q format."""


class FailedCoreError(Algas4Error, RuntimeError):
    """A failed core was asked to tick."""


class ChecksumError(Algas4Error, ValueError):
    """A DIC packet failed its checksum on receipt."""
