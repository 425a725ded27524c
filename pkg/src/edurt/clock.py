"""Monotonic millisecond clock used for all lease arithmetic.

Lease deadlines must never move backwards when the wall clock is adjusted,
so every timestamp that participates in expiry math comes from the process
monotonic clock. Wall-clock time is only ever attached to records for
display and never compared against these values.
"""

from __future__ import annotations

import time
from typing import Callable

__all__ = ["Clock", "monotonic_ms", "wall_clock_iso"]

# Anything that returns monotonic milliseconds; tests substitute counters.
Clock = Callable[[], int]


def monotonic_ms() -> int:
    return time.monotonic_ns() // 1_000_000


def wall_clock_iso() -> str:
    """Wall-clock timestamp for display fields only."""
    return time.strftime("%Y-%m-%dT%H:%M:%S%z")
