"""Root of the runtime's exception hierarchy.

Every error raised by this package derives from EdurtError so callers can
catch the whole family with one clause. Subsystem-specific errors live next
to the code that raises them (see demands, store, wire, config, node,
pipeline) and form a tree under this root.
"""

from __future__ import annotations

__all__ = ["EdurtError"]


class EdurtError(Exception):
    """Base class for all errors raised by the edurt runtime."""
