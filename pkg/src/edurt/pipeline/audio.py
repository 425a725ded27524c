"""Sample loading and preprocessing.

Three input formats are accepted: raw little-endian 16-bit PCM, a
minimal mono PCM WAV, and whitespace-separated decimal text. Preprocessing
optionally removes noise and silence (driven by the preprocessing flags)
and always normalizes to unit peak.
"""

from __future__ import annotations

import re
import struct
from dataclasses import dataclass

import numpy as np

from .errors import PipelineError
from .params import ModuleParams, derive_preprocessing_flags

__all__ = [
    "DEFAULT_SILENCE_THRESHOLD",
    "DEFAULT_SAMPLE_RATE",
    "UnsupportedFormat",
    "MalformedInput",
    "EmptyAfterSilenceRemoval",
    "Sample",
    "load_sample",
    "preprocess",
]

DEFAULT_SILENCE_THRESHOLD = 0.001
DEFAULT_SAMPLE_RATE = 8000

# Window of the moving-average low-pass whose residual acts as the noise
# filter; an artifact constant, not a tunable.
_NOISE_WINDOW = 5


class UnsupportedFormat(PipelineError):
    pass


class MalformedInput(PipelineError):
    def __init__(self, offset: int, reason: str) -> None:
        super().__init__(f"malformed input at offset {offset}: {reason}")
        self.offset = offset


class EmptyAfterSilenceRemoval(PipelineError):
    def __init__(self) -> None:
        super().__init__("every sample fell below the silence threshold")


@dataclass(frozen=True)
class Sample:
    """Audio samples as 64-bit floats plus their origin metadata."""

    samples: tuple[float, ...]
    sample_rate: int = DEFAULT_SAMPLE_RATE
    source_format: str = "pcm16le"


def load_sample(
    data: bytes, source_format: str, sample_rate: int = DEFAULT_SAMPLE_RATE
) -> Sample:
    """Decode raw bytes into a Sample.

    Raises:
        UnsupportedFormat: unknown format name, or a WAV feature outside
            the minimal mono 16-bit PCM subset.
        MalformedInput: empty input or undecodable content, with the byte
            (or character) offset of the problem.
    """
    if not data:
        raise MalformedInput(0, "empty input")
    if source_format == "pcm16le":
        return Sample(_decode_pcm16le(data), sample_rate, "pcm16le")
    if source_format == "wav":
        samples, rate = _decode_wav(data)
        return Sample(samples, rate, "wav")
    if source_format == "text":
        return Sample(_decode_text(data), sample_rate, "text")
    raise UnsupportedFormat(f"unknown sample format {source_format!r}")


def _decode_pcm16le(data: bytes) -> tuple[float, ...]:
    if len(data) % 2 != 0:
        raise MalformedInput(len(data) - 1, "odd byte count for 16-bit samples")
    count = len(data) // 2
    values = struct.unpack(f"<{count}h", data)
    return tuple(v / 32768.0 for v in values)


def _decode_text(data: bytes) -> tuple[float, ...]:
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise MalformedInput(exc.start, "not valid UTF-8") from None
    values: list[float] = []
    for match in re.finditer(r"\S+", text):
        try:
            values.append(float(match.group()))
        except ValueError:
            raise MalformedInput(
                match.start(), f"{match.group()!r} is not a decimal number"
            ) from None
    if not values:
        raise MalformedInput(0, "no numbers in text input")
    return tuple(values)


def _decode_wav(data: bytes) -> tuple[tuple[float, ...], int]:
    # Minimal RIFF walk: enough for the mono 16-bit PCM files this
    # pipeline produces and consumes, nothing more.
    if len(data) < 12:
        raise MalformedInput(0, "shorter than a RIFF header")
    if data[0:4] != b"RIFF":
        raise MalformedInput(0, "missing RIFF tag")
    if data[8:12] != b"WAVE":
        raise MalformedInput(8, "missing WAVE tag")
    offset = 12
    fmt: tuple[int, int, int, int] | None = None
    payload: bytes | None = None
    while offset + 8 <= len(data):
        chunk_id = data[offset : offset + 4]
        (chunk_size,) = struct.unpack_from("<I", data, offset + 4)
        body_start = offset + 8
        if body_start + chunk_size > len(data):
            raise MalformedInput(offset, "chunk overruns the file")
        if chunk_id == b"fmt ":
            if chunk_size < 16:
                raise MalformedInput(offset, "fmt chunk too short")
            fmt = struct.unpack_from("<HHIxxxxxxH", data, body_start)
        elif chunk_id == b"data":
            payload = data[body_start : body_start + chunk_size]
        # Chunks are word-aligned; a chunk with odd size carries a pad byte.
        offset = body_start + chunk_size + (chunk_size % 2)
    if fmt is None:
        raise MalformedInput(12, "no fmt chunk")
    if payload is None:
        raise MalformedInput(12, "no data chunk")
    audio_format, channels, rate, bits = fmt
    if audio_format != 1:
        raise UnsupportedFormat(f"non-PCM codec {audio_format:#06x}")
    if channels != 1:
        raise UnsupportedFormat(f"{channels} channels, only mono is supported")
    if bits != 16:
        raise UnsupportedFormat(f"{bits}-bit samples, only 16-bit is supported")
    return _decode_pcm16le(payload), rate


def preprocess(
    sample: Sample,
    params: ModuleParams | None = None,
    threshold: float = DEFAULT_SILENCE_THRESHOLD,
) -> Sample:
    """Noise removal, then silence removal (both flag-gated), then
    normalization, which always runs.

    Silence removal drops samples with |x| strictly below the threshold;
    a value exactly at the threshold stays. Normalization divides by the
    peak absolute value and leaves an all-zero signal unchanged.

    Raises:
        EmptyAfterSilenceRemoval: the silence pass dropped every sample.
    """
    vector = params.preprocessing_params if params is not None else None
    noise_flag, silence_flag = derive_preprocessing_flags(vector)
    values = np.asarray(sample.samples, dtype=np.float64)
    if noise_flag:
        kernel = np.ones(_NOISE_WINDOW) / _NOISE_WINDOW
        values = values - np.convolve(values, kernel, mode="same")
    if silence_flag:
        values = values[np.abs(values) >= threshold]
        if values.size == 0:
            raise EmptyAfterSilenceRemoval()
    peak = float(np.max(np.abs(values))) if values.size else 0.0
    if peak > 0.0:
        values = values / peak
    return Sample(tuple(float(v) for v in values), sample.sample_rate, sample.source_format)
