"""Stage executors: pure bytes-to-bytes wrappers around the pipeline ops.

Each executor decodes the stage envelope, applies exactly one pipeline
operation to the body, and re-encodes the envelope with the new body,
carrying mode, speaker, parameters and training set through unchanged.
Registering these with worker loops makes the four-stage workload
runnable; applying them in order in one process is the sequential oracle
the distributed run is compared against.
"""

from __future__ import annotations

from typing import Callable

from ..workload import WorkloadDefinition, chain
from .audio import load_sample, preprocess
from .classify import DISTANCE, TrainingSet, classify, train
from .errors import PipelineError
from .features import extract_features
from .params import (
    CLASSIFICATION,
    FEATURE_EXTRACTION,
    PREPROCESSING,
    ModuleParams,
    derive_preprocessing_flags,
)
from .payloads import (
    PayloadError,
    StagePayload,
    decode_features,
    decode_sample,
    decode_stage_payload,
    decode_training_set,
    encode_features,
    encode_result_set,
    encode_sample,
    encode_stage_payload,
    encode_training_set,
)

__all__ = [
    "Executor",
    "pipeline_executors",
    "dmarf_workload",
    "default_params",
    "initial_payload",
    "empty_training_set",
    "run_sequential",
]

Executor = Callable[[bytes], bytes]

# Nominal id for the single preprocessing pipeline implemented here; used
# only in training-set metadata and filenames.
PREPROCESSING_METHOD_ID = 1


def default_params(
    feature_method: int,
    classifier_id: int = DISTANCE,
    noise: bool = False,
    silence: bool = False,
) -> ModuleParams:
    params = ModuleParams()
    params.set_params([noise, silence], PREPROCESSING)
    params.set_params([feature_method], FEATURE_EXTRACTION)
    params.set_params([classifier_id], CLASSIFICATION)
    return params


def initial_payload(
    mode: str,
    audio: bytes,
    audio_format: str,
    params: ModuleParams,
    speaker_id: str | None = None,
    training_set: bytes | None = None,
) -> bytes:
    """The stage-1 envelope a generator deposits for a new job."""
    return encode_stage_payload(
        StagePayload(
            mode=mode,
            body_kind="audio",
            body=audio,
            speaker_id=speaker_id,
            params=params,
            training_set=training_set,
            audio_format=audio_format,
        )
    )


def empty_training_set(params: ModuleParams | None) -> TrainingSet:
    """A fresh training set stamped with the job's settings."""
    noise, silence = derive_preprocessing_flags(
        params.preprocessing_params if params is not None else None
    )
    return TrainingSet(
        (),
        classifier_id=_classifier_id(params),
        preprocessing_method=PREPROCESSING_METHOD_ID,
        feature_method=_feature_method(params),
        noise_flag=noise,
        silence_flag=silence,
    )


def _feature_method(params: ModuleParams | None) -> int:
    if params is None:
        raise PayloadError("module parameters missing from stage envelope")
    vector = params.feature_extraction_params
    if not vector or not isinstance(vector[0], int) or isinstance(vector[0], bool):
        raise PayloadError("feature extraction parameters lack a method id")
    return vector[0]


def _classifier_id(params: ModuleParams | None) -> int:
    if params is None:
        raise PayloadError("module parameters missing from stage envelope")
    vector = params.classification_params
    if not vector or not isinstance(vector[0], int) or isinstance(vector[0], bool):
        raise PayloadError("classification parameters lack a classifier id")
    return vector[0]


def _expect_kind(payload: StagePayload, body_kind: str) -> None:
    if payload.body_kind != body_kind:
        raise PayloadError(
            f"expected a {body_kind!r} body, got {payload.body_kind!r}"
        )


def _load_executor(data: bytes) -> bytes:
    payload = decode_stage_payload(data)
    _expect_kind(payload, "audio")
    source_format = payload.audio_format or "pcm16le"
    sample = load_sample(payload.body, source_format)
    return encode_stage_payload(payload.with_body("sample", encode_sample(sample)))


def _preprocess_executor(data: bytes) -> bytes:
    payload = decode_stage_payload(data)
    _expect_kind(payload, "sample")
    sample = preprocess(decode_sample(payload.body), payload.params)
    return encode_stage_payload(payload.with_body("sample", encode_sample(sample)))


def _extract_executor(data: bytes) -> bytes:
    payload = decode_stage_payload(data)
    _expect_kind(payload, "sample")
    method = _feature_method(payload.params)
    features = extract_features(method, decode_sample(payload.body))
    return encode_stage_payload(payload.with_body("features", encode_features(features)))


def _classify_executor(data: bytes) -> bytes:
    payload = decode_stage_payload(data)
    _expect_kind(payload, "features")
    features = decode_features(payload.body)
    if payload.training_set is not None:
        ts = decode_training_set(payload.training_set)
    else:
        ts = empty_training_set(payload.params)
    if payload.mode == "train":
        if payload.speaker_id is None:
            raise PayloadError("training requires a speaker id")
        updated = train(ts, payload.speaker_id, features)
        return encode_stage_payload(
            payload.with_body("training-set", encode_training_set(updated))
        )
    result = classify(ts, features, _classifier_id(payload.params))
    return encode_stage_payload(
        payload.with_body("result-set", encode_result_set(result))
    )


def pipeline_executors() -> dict[str, Executor]:
    return {
        "sample-loader": _load_executor,
        "preprocessor": _preprocess_executor,
        "feature-extractor": _extract_executor,
        "classifier": _classify_executor,
    }


def dmarf_workload() -> WorkloadDefinition:
    return chain(
        "dmarf",
        [
            ("load", "sample-loader"),
            ("preprocess", "preprocessor"),
            ("extract", "feature-extractor"),
            ("classify", "classifier"),
        ],
    )


def run_sequential(
    workload: WorkloadDefinition, executors: dict[str, Executor], payload: bytes
) -> bytes:
    """Apply the chain's executors in order in this process."""
    for stage in workload.stages:
        executor = executors.get(stage.executor_id)
        if executor is None:
            raise PipelineError(f"no executor {stage.executor_id!r}")
        payload = executor(payload)
    return payload
