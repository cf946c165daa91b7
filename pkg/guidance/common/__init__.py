"""
Common utilities shared across the simulators in the guidance package.
This package contains shared functionality for logging and other
cross-cutting concerns.
"""

from .logging_conf import configure_logging

__all__ = ["configure_logging"]
