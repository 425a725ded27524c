"""Training sets, classification and the training-set file naming rule.

A training set maps speaker ids to running-mean feature vectors. The
distance classifier ranks speakers by Euclidean distance to their mean;
the random classifier ranks them in a deterministic pseudo-random order
seeded from the inputs. Both are pure functions of their arguments.
"""

from __future__ import annotations

import hashlib
import math
import random
import struct
from dataclasses import dataclass

from .errors import PipelineError
from .features import FeatureVector

__all__ = [
    "NEURAL_NETWORK",
    "STOCHASTIC",
    "RANDOM_CLASSIFICATION",
    "DISTANCE",
    "EmptyTrainingSet",
    "DimensionMismatch",
    "NotImplementedClassifier",
    "SpeakerModel",
    "TrainingSet",
    "ResultSet",
    "train",
    "classify",
    "classifier_name",
    "training_set_filename",
]

# Classifier ids. Name set is the contract; integer values are this
# implementation's choice.
NEURAL_NETWORK = 1
STOCHASTIC = 2
RANDOM_CLASSIFICATION = 3
DISTANCE = 4

_CLASSIFIER_NAMES = {
    NEURAL_NETWORK: "NeuralNetwork",
    STOCHASTIC: "Stochastic",
    RANDOM_CLASSIFICATION: "Random",
    DISTANCE: "Distance",
}

_UNIMPLEMENTED_CLASSIFIERS = {NEURAL_NETWORK, STOCHASTIC}


class EmptyTrainingSet(PipelineError):
    def __init__(self) -> None:
        super().__init__("cannot classify against an empty training set")


class DimensionMismatch(PipelineError):
    def __init__(self, expected: int, got: int) -> None:
        super().__init__(f"feature dimension {got} does not match {expected}")
        self.expected = expected
        self.got = got


class NotImplementedClassifier(PipelineError):
    def __init__(self, label: str) -> None:
        super().__init__(f"classifier {label} is not implemented")
        self.label = label


@dataclass(frozen=True)
class SpeakerModel:
    """Running mean over every feature vector trained for one speaker."""

    speaker_id: str
    count: int
    mean: tuple[float, ...]


@dataclass(frozen=True)
class TrainingSet:
    """Sorted speaker models plus the settings they were trained under.

    Models are kept sorted by speaker_id so equal training histories
    produce identical values and identical encodings.
    """

    models: tuple[SpeakerModel, ...] = ()
    classifier_id: int = DISTANCE
    preprocessing_method: int = 1
    feature_method: int = 0
    noise_flag: int = 0
    silence_flag: int = 0

    def __post_init__(self) -> None:
        ids = [model.speaker_id for model in self.models]
        if ids != sorted(ids):
            raise ValueError("models must be sorted by speaker_id")
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate speaker_id")
        dims = {len(model.mean) for model in self.models}
        if len(dims) > 1:
            raise ValueError("models disagree on feature dimension")

    @property
    def dimension(self) -> int | None:
        return len(self.models[0].mean) if self.models else None

    def speaker_ids(self) -> tuple[str, ...]:
        return tuple(model.speaker_id for model in self.models)

    def model(self, speaker_id: str) -> SpeakerModel | None:
        for candidate in self.models:
            if candidate.speaker_id == speaker_id:
                return candidate
        return None


@dataclass(frozen=True)
class ResultSet:
    """Ranked classification outcome: ascending distance, ties by id."""

    entries: tuple[tuple[str, float], ...]

    def __post_init__(self) -> None:
        ranked = sorted(self.entries, key=lambda e: (e[1], e[0]))
        object.__setattr__(self, "entries", tuple(ranked))

    def top(self) -> tuple[str, float]:
        if not self.entries:
            raise ValueError("empty result set")
        return self.entries[0]


def train(ts: TrainingSet, speaker_id: str, fv: FeatureVector) -> TrainingSet:
    """Fold one feature vector into the speaker's running mean.

    Raises:
        DimensionMismatch: fv length differs from the set's dimension.
    """
    if ts.dimension is not None and len(fv.values) != ts.dimension:
        raise DimensionMismatch(ts.dimension, len(fv.values))
    existing = ts.model(speaker_id)
    if existing is None:
        updated = SpeakerModel(speaker_id, 1, tuple(fv.values))
    else:
        count = existing.count + 1
        mean = tuple(
            m + (v - m) / count for m, v in zip(existing.mean, fv.values)
        )
        updated = SpeakerModel(speaker_id, count, mean)
    others = [m for m in ts.models if m.speaker_id != speaker_id]
    models = tuple(sorted(others + [updated], key=lambda m: m.speaker_id))
    return TrainingSet(
        models,
        ts.classifier_id,
        ts.preprocessing_method,
        ts.feature_method,
        ts.noise_flag,
        ts.silence_flag,
    )


def classify(ts: TrainingSet, fv: FeatureVector, classifier_id: int) -> ResultSet:
    """Rank every trained speaker against one feature vector.

    Raises:
        EmptyTrainingSet, DimensionMismatch, NotImplementedClassifier.
    """
    if not ts.models:
        raise EmptyTrainingSet()
    if len(fv.values) != ts.dimension:
        raise DimensionMismatch(ts.dimension, len(fv.values))
    if classifier_id == DISTANCE:
        entries = tuple(
            (model.speaker_id, _euclidean(model.mean, fv.values))
            for model in ts.models
        )
        return ResultSet(entries)
    if classifier_id == RANDOM_CLASSIFICATION:
        return _random_classify(ts, fv)
    label = _CLASSIFIER_NAMES.get(classifier_id, f"classifier {classifier_id}")
    raise NotImplementedClassifier(label)


def _euclidean(mean: tuple[float, ...], values: tuple[float, ...]) -> float:
    return math.sqrt(sum((m - v) ** 2 for m, v in zip(mean, values)))


def _random_classify(ts: TrainingSet, fv: FeatureVector) -> ResultSet:
    # Deterministic per (training set, feature vector): the rank order is
    # drawn from a generator seeded by digests of both inputs, so the
    # distributed and sequential runs agree byte for byte.
    digest = hashlib.sha256()
    digest.update(_digest_training_set(ts))
    digest.update(_digest_features(fv))
    rng = random.Random(int.from_bytes(digest.digest()[:8], "big"))
    order = list(ts.speaker_ids())
    rng.shuffle(order)
    entries = tuple((speaker_id, float(rank)) for rank, speaker_id in enumerate(order))
    return ResultSet(entries)


def _digest_training_set(ts: TrainingSet) -> bytes:
    h = hashlib.sha256()
    h.update(
        struct.pack(
            ">IIIBB",
            ts.classifier_id,
            ts.preprocessing_method,
            ts.feature_method,
            ts.noise_flag,
            ts.silence_flag,
        )
    )
    for model in ts.models:
        encoded_id = model.speaker_id.encode("utf-8")
        h.update(struct.pack(">I", len(encoded_id)) + encoded_id)
        h.update(struct.pack(">Q", model.count))
        h.update(struct.pack(f">{len(model.mean)}d", *model.mean))
    return h.digest()


def _digest_features(fv: FeatureVector) -> bytes:
    h = hashlib.sha256()
    h.update(struct.pack(">I", fv.method))
    h.update(struct.pack(f">{len(fv.values)}d", *fv.values))
    return h.digest()


def classifier_name(classifier_id: int) -> str:
    return _CLASSIFIER_NAMES.get(classifier_id, f"classifier-{classifier_id}")


def training_set_filename(
    classifier_name_text: str,
    preprocessing_method: int,
    feature_method: int,
    flags: tuple[int, int],
) -> str:
    """Deterministic snapshot filename; distinct flag combinations get
    distinct names: `<classifier>.<preproc>.<feat>.<noise><silence>.gz`."""
    noise, silence = flags
    return (
        f"{classifier_name_text}.{preprocessing_method}.{feature_method}."
        f"{noise}{silence}.gz"
    )
