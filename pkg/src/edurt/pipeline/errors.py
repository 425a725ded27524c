"""Shared error base for the audio-recognition pipeline."""

from __future__ import annotations

from ..errors import EdurtError

__all__ = ["PipelineError"]


class PipelineError(EdurtError):
    """Any failure inside the pipeline ops; workers treat these as
    executor failures, which the store turns into retries."""
