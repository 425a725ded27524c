"""The stage ABI: how pipeline values travel inside demand payloads.

Every stage payload is a versioned tag-length-value envelope carrying the
job mode, optional speaker id, module parameters, an optional training
set, and a typed body. Stage k's result bytes are stage k+1's payload
verbatim, so everything a stage needs (including the training set) must
ride in the envelope; that also makes cache identity correct, because the
demand signature covers the full payload.

Layout (all integers big-endian): version byte 0x01, then fields of
(tag u8, length u32, bytes), emitted in ascending tag order.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace

from ..encoding import RecordError, RecordReader, RecordWriter
from .audio import Sample
from .classify import ResultSet, SpeakerModel, TrainingSet
from .errors import PipelineError
from .features import FeatureVector
from .params import (
    CLASSIFICATION,
    FEATURE_EXTRACTION,
    PREPROCESSING,
    ModuleParams,
    Scalar,
)

__all__ = [
    "PAYLOAD_VERSION",
    "TAG_MODE",
    "TAG_SPEAKER",
    "TAG_PARAMS",
    "TAG_TRAINING_SET",
    "TAG_BODY_KIND",
    "TAG_BODY",
    "TAG_AUDIO_FORMAT",
    "PayloadError",
    "StagePayload",
    "encode_stage_payload",
    "decode_stage_payload",
    "encode_sample",
    "decode_sample",
    "encode_features",
    "decode_features",
    "encode_training_set",
    "decode_training_set",
    "encode_result_set",
    "decode_result_set",
    "encode_module_params",
    "decode_module_params",
]

PAYLOAD_VERSION = 0x01

TAG_MODE = 0x01
TAG_SPEAKER = 0x02
TAG_PARAMS = 0x03
TAG_TRAINING_SET = 0x04
TAG_BODY_KIND = 0x05
TAG_BODY = 0x06
TAG_AUDIO_FORMAT = 0x07

MODES = ("train", "classify")


class PayloadError(PipelineError):
    """A stage payload does not follow the documented envelope layout."""


@dataclass(frozen=True)
class StagePayload:
    """One decoded envelope. body_kind names how to read body."""

    mode: str
    body_kind: str
    body: bytes
    speaker_id: str | None = None
    params: ModuleParams | None = None
    training_set: bytes | None = None
    audio_format: str | None = None

    def with_body(self, body_kind: str, body: bytes) -> StagePayload:
        return replace(self, body_kind=body_kind, body=body, audio_format=None)


def encode_stage_payload(payload: StagePayload) -> bytes:
    if payload.mode not in MODES:
        raise PayloadError(f"mode must be one of {MODES}, got {payload.mode!r}")
    fields: list[tuple[int, bytes]] = [(TAG_MODE, payload.mode.encode("utf-8"))]
    if payload.speaker_id is not None:
        fields.append((TAG_SPEAKER, payload.speaker_id.encode("utf-8")))
    if payload.params is not None:
        fields.append((TAG_PARAMS, encode_module_params(payload.params)))
    if payload.training_set is not None:
        fields.append((TAG_TRAINING_SET, payload.training_set))
    fields.append((TAG_BODY_KIND, payload.body_kind.encode("utf-8")))
    fields.append((TAG_BODY, payload.body))
    if payload.audio_format is not None:
        fields.append((TAG_AUDIO_FORMAT, payload.audio_format.encode("utf-8")))
    writer = RecordWriter().u8(PAYLOAD_VERSION)
    for tag, data in sorted(fields):
        writer.u8(tag).blob(data)
    return writer.done()


def decode_stage_payload(data: bytes) -> StagePayload:
    reader = RecordReader(data)
    try:
        version = reader.u8()
        if version != PAYLOAD_VERSION:
            raise PayloadError(f"unsupported payload version {version:#04x}")
        fields: dict[int, bytes] = {}
        while reader.remaining() > 0:
            tag = reader.u8()
            if tag in fields:
                raise PayloadError(f"duplicate field tag {tag:#04x}")
            fields[tag] = reader.blob()
    except RecordError as exc:
        raise PayloadError(f"malformed envelope: {exc}") from None
    known = {
        TAG_MODE,
        TAG_SPEAKER,
        TAG_PARAMS,
        TAG_TRAINING_SET,
        TAG_BODY_KIND,
        TAG_BODY,
        TAG_AUDIO_FORMAT,
    }
    unknown = set(fields) - known
    if unknown:
        raise PayloadError(f"unknown field tags {sorted(unknown)}")
    for required in (TAG_MODE, TAG_BODY_KIND, TAG_BODY):
        if required not in fields:
            raise PayloadError(f"missing required field tag {required:#04x}")
    mode = fields[TAG_MODE].decode("utf-8")
    if mode not in MODES:
        raise PayloadError(f"mode must be one of {MODES}, got {mode!r}")
    return StagePayload(
        mode=mode,
        body_kind=fields[TAG_BODY_KIND].decode("utf-8"),
        body=fields[TAG_BODY],
        speaker_id=(
            fields[TAG_SPEAKER].decode("utf-8") if TAG_SPEAKER in fields else None
        ),
        params=(
            decode_module_params(fields[TAG_PARAMS]) if TAG_PARAMS in fields else None
        ),
        training_set=fields.get(TAG_TRAINING_SET),
        audio_format=(
            fields[TAG_AUDIO_FORMAT].decode("utf-8")
            if TAG_AUDIO_FORMAT in fields
            else None
        ),
    )


# --- body codecs ---


def _read_body(data: bytes, what: str, read):
    reader = RecordReader(data)
    try:
        value = read(reader)
        reader.expect_end()
    except RecordError as exc:
        raise PayloadError(f"malformed {what} body: {exc}") from None
    return value


def encode_sample(sample: Sample) -> bytes:
    writer = RecordWriter()
    writer.u32(sample.sample_rate)
    writer.text(sample.source_format)
    writer.u32(len(sample.samples))
    for value in sample.samples:
        writer.f64(value)
    return writer.done()


def decode_sample(data: bytes) -> Sample:
    def read(reader: RecordReader) -> Sample:
        sample_rate = reader.u32()
        source_format = reader.text()
        count = reader.u32()
        values = tuple(reader.f64() for _ in range(count))
        return Sample(values, sample_rate, source_format)

    return _read_body(data, "sample", read)


def encode_features(fv: FeatureVector) -> bytes:
    writer = RecordWriter().u32(fv.method).u32(len(fv.values))
    for value in fv.values:
        writer.f64(value)
    return writer.done()


def decode_features(data: bytes) -> FeatureVector:
    def read(reader: RecordReader) -> FeatureVector:
        method = reader.u32()
        count = reader.u32()
        values = tuple(reader.f64() for _ in range(count))
        return FeatureVector(values, method)

    return _read_body(data, "feature vector", read)


def encode_training_set(ts: TrainingSet) -> bytes:
    writer = RecordWriter()
    writer.u32(ts.classifier_id)
    writer.u32(ts.preprocessing_method)
    writer.u32(ts.feature_method)
    writer.u8(ts.noise_flag)
    writer.u8(ts.silence_flag)
    writer.u32(len(ts.models))
    for model in ts.models:  # already sorted by speaker_id
        writer.text(model.speaker_id)
        writer.u64(model.count)
        writer.u32(len(model.mean))
        for value in model.mean:
            writer.f64(value)
    return writer.done()


def decode_training_set(data: bytes) -> TrainingSet:
    def read(reader: RecordReader) -> TrainingSet:
        classifier_id = reader.u32()
        preprocessing_method = reader.u32()
        feature_method = reader.u32()
        noise_flag = reader.u8()
        silence_flag = reader.u8()
        count = reader.u32()
        models = []
        for _ in range(count):
            speaker_id = reader.text()
            trained = reader.u64()
            dimension = reader.u32()
            mean = tuple(reader.f64() for _ in range(dimension))
            models.append(SpeakerModel(speaker_id, trained, mean))
        try:
            return TrainingSet(
                tuple(models),
                classifier_id,
                preprocessing_method,
                feature_method,
                noise_flag,
                silence_flag,
            )
        except ValueError as exc:
            raise PayloadError(str(exc)) from None

    return _read_body(data, "training set", read)


def encode_result_set(rs: ResultSet) -> bytes:
    writer = RecordWriter().u32(len(rs.entries))
    for speaker_id, distance in rs.entries:
        writer.text(speaker_id)
        writer.f64(distance)
    return writer.done()


def decode_result_set(data: bytes) -> ResultSet:
    def read(reader: RecordReader) -> ResultSet:
        count = reader.u32()
        entries = tuple((reader.text(), reader.f64()) for _ in range(count))
        return ResultSet(entries)

    return _read_body(data, "result set", read)


# Scalar tags inside parameter vectors.
_SCALAR_BOOL = 1
_SCALAR_INT = 2
_SCALAR_FLOAT = 3
_SCALAR_TEXT = 4

_U64_MASK = (1 << 64) - 1


def encode_module_params(params: ModuleParams) -> bytes:
    writer = RecordWriter()
    for key in (PREPROCESSING, FEATURE_EXTRACTION, CLASSIFICATION):
        vector = params.params_for(key)
        writer.u32(len(vector))
        for value in vector:
            _write_scalar(writer, value)
    return writer.done()


def _write_scalar(writer: RecordWriter, value: Scalar) -> None:
    # bool first: it is an int subtype and must not fall into the int arm.
    if isinstance(value, bool):
        writer.u8(_SCALAR_BOOL).u8(1 if value else 0)
    elif isinstance(value, int):
        writer.u8(_SCALAR_INT).u64(value & _U64_MASK)
    elif isinstance(value, float):
        writer.u8(_SCALAR_FLOAT).f64(value)
    elif isinstance(value, str):
        writer.u8(_SCALAR_TEXT).text(value)
    else:
        raise PayloadError(f"unsupported parameter type {type(value).__name__}")


def decode_module_params(data: bytes) -> ModuleParams:
    reader = RecordReader(data)
    params = ModuleParams()
    try:
        for key in (PREPROCESSING, FEATURE_EXTRACTION, CLASSIFICATION):
            count = reader.u32()
            params.set_params([_read_scalar(reader) for _ in range(count)], key)
        reader.expect_end()
    except RecordError as exc:
        raise PayloadError(f"malformed parameter block: {exc}") from None
    return params


def _read_scalar(reader: RecordReader) -> Scalar:
    tag = reader.u8()
    if tag == _SCALAR_BOOL:
        return reader.u8() == 1
    if tag == _SCALAR_INT:
        raw = reader.u64()
        return raw - (1 << 64) if raw >= (1 << 63) else raw
    if tag == _SCALAR_FLOAT:
        return reader.f64()
    if tag == _SCALAR_TEXT:
        return reader.text()
    raise PayloadError(f"unknown scalar tag {tag}")
