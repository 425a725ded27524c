"""The four-stage audio-recognition workload: loading, preprocessing,
feature extraction, and training/classification, plus the payload
encodings that let those stages run as chained demands."""

from .errors import PipelineError

__all__ = ["PipelineError"]
