"""Feature extraction: method-id dispatch over the implemented extractors.

Implemented methods: FFT magnitude spectrum, min/max amplitudes, and a
deterministic pseudo-random extractor. The remaining listed methods are
recognized but unimplemented; ids outside the list are unknown.
"""

from __future__ import annotations

import hashlib
import random
import struct
from dataclasses import dataclass

import numpy as np

from .audio import Sample
from .errors import PipelineError

__all__ = [
    "LPC",
    "FFT",
    "F0",
    "SEGMENTATION",
    "CEPSTRAL",
    "RANDOM_FEATURE_EXTRACTION",
    "MIN_MAX_AMPLITUDES",
    "FEATURE_EXTRACTION_PLUGIN",
    "FEATURE_EXTRACTION_AGGREGATOR",
    "FFT_WINDOW",
    "FFT_BINS",
    "MIN_MAX_COUNT",
    "RANDOM_DIMENSION",
    "UnknownFeatureExtractionMethod",
    "NotImplementedMethod",
    "FeatureVector",
    "extract_features",
]

# Method ids. The names and the dispatch shape are the contract; the
# integer values are this implementation's choice.
LPC = 1
FFT = 2
F0 = 3
SEGMENTATION = 4
CEPSTRAL = 5
RANDOM_FEATURE_EXTRACTION = 6
MIN_MAX_AMPLITUDES = 7
FEATURE_EXTRACTION_PLUGIN = 8
FEATURE_EXTRACTION_AGGREGATOR = 9

_UNIMPLEMENTED = {
    LPC: "LPC",
    F0: "F0",
    SEGMENTATION: "Segmentation",
    CEPSTRAL: "Cepstral",
    FEATURE_EXTRACTION_PLUGIN: "FeatureExtractionPlugin",
    FEATURE_EXTRACTION_AGGREGATOR: "FeatureExtractionAggregator",
}

FFT_WINDOW = 1024  # analysis window, zero-padded
FFT_BINS = 64      # feature dimension: first 64 magnitude bins
MIN_MAX_COUNT = 10  # smallest and largest amplitudes kept, each
RANDOM_DIMENSION = 64


class UnknownFeatureExtractionMethod(PipelineError):
    def __init__(self, method_id: int) -> None:
        super().__init__(f"Unknown feature extraction method: {method_id}")
        self.method_id = method_id


class NotImplementedMethod(PipelineError):
    def __init__(self, name: str) -> None:
        super().__init__(f"feature extraction method {name} is not implemented")
        self.name = name


@dataclass(frozen=True)
class FeatureVector:
    values: tuple[float, ...]
    method: int


def extract_features(method_id: int, sample: Sample) -> FeatureVector:
    """Dispatch on method_id and extract one feature vector.

    Raises:
        UnknownFeatureExtractionMethod: id outside the method list.
        NotImplementedMethod: listed method without an implementation.
    """
    if method_id == FFT:
        return _fft_features(sample)
    if method_id == MIN_MAX_AMPLITUDES:
        return _min_max_features(sample)
    if method_id == RANDOM_FEATURE_EXTRACTION:
        return _random_features(sample)
    name = _UNIMPLEMENTED.get(method_id)
    if name is not None:
        raise NotImplementedMethod(name)
    raise UnknownFeatureExtractionMethod(method_id)


def _fft_features(sample: Sample) -> FeatureVector:
    window = np.zeros(FFT_WINDOW, dtype=np.float64)
    head = np.asarray(sample.samples[:FFT_WINDOW], dtype=np.float64)
    window[: head.size] = head
    spectrum = np.fft.rfft(window)
    magnitudes = np.abs(spectrum[:FFT_BINS])
    return FeatureVector(tuple(float(m) for m in magnitudes), FFT)


def _min_max_features(sample: Sample) -> FeatureVector:
    ordered = sorted(sample.samples)
    smallest = list(ordered[:MIN_MAX_COUNT])
    largest = list(ordered[-MIN_MAX_COUNT:]) if ordered else []
    # Signals shorter than the group size pad with zeros to keep the
    # dimension fixed at 2 * MIN_MAX_COUNT.
    smallest += [0.0] * (MIN_MAX_COUNT - len(smallest))
    largest = [0.0] * (MIN_MAX_COUNT - len(largest)) + largest
    return FeatureVector(tuple(smallest + largest), MIN_MAX_AMPLITUDES)


def _random_features(sample: Sample) -> FeatureVector:
    # Deterministic per input: the generator is seeded from a digest of
    # the sample contents, so equal samples yield equal features and the
    # distributed run stays reproducible.
    digest = hashlib.sha256()
    digest.update(struct.pack(">I", sample.sample_rate))
    digest.update(struct.pack(f">{len(sample.samples)}d", *sample.samples))
    rng = random.Random(int.from_bytes(digest.digest()[:8], "big"))
    values = tuple(rng.random() for _ in range(RANDOM_DIMENSION))
    return FeatureVector(values, RANDOM_FEATURE_EXTRACTION)
