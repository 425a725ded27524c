"""Job intake and tracking for the management surface.

A job is one end-to-end run of a workload chain on one audio input. The
manager validates the request completely before anything touches the
demand store, hands the initial envelope to a generator on the hosting
node, and records progress so status queries can answer at any time.

Train jobs read and update the named training set held by the node; runs
that target the same set are serialized so each one folds into the
latest version. Classify jobs only read it.
"""

from __future__ import annotations

import base64
import binascii
import threading
import time
import uuid
from dataclasses import dataclass, field

from .errors import EdurtError
from .node import GipsyNode, TierIdentity, add_tier
from .pipeline.audio import load_sample
from .pipeline.classify import classifier_name, training_set_filename
from .pipeline.errors import PipelineError
from .pipeline.executors import (
    PREPROCESSING_METHOD_ID,
    default_params,
    dmarf_workload,
    empty_training_set,
    initial_payload,
)
from .pipeline.features import FFT
from .pipeline.params import (
    CLASSIFICATION,
    FEATURE_EXTRACTION,
    PREPROCESSING,
    ModuleParams,
    derive_preprocessing_flags,
)
from .pipeline.payloads import (
    decode_result_set,
    decode_stage_payload,
    decode_training_set,
    encode_training_set,
)
from .workload import WorkloadDefinition

__all__ = [
    "JobError",
    "UnknownWorkload",
    "UnknownJob",
    "BadInput",
    "ValidationError",
    "JobRecord",
    "JobManager",
    "JOB_MODES",
    "AUDIO_FORMATS",
]

JOB_MODES = ("train", "classify")
AUDIO_FORMATS = ("pcm16le", "wav", "text")

_PARAM_SLOTS = {
    "preprocessing": PREPROCESSING,
    "feature_extraction": FEATURE_EXTRACTION,
    "classification": CLASSIFICATION,
}


class JobError(EdurtError):
    pass


class UnknownWorkload(JobError):
    def __init__(self, workload_id: str) -> None:
        super().__init__(f"no workload named {workload_id!r}")
        self.workload_id = workload_id


class UnknownJob(JobError):
    def __init__(self, job_id: str) -> None:
        super().__init__(f"no job named {job_id!r}")
        self.job_id = job_id


class BadInput(JobError):
    """The audio bytes cannot be decoded as claimed."""


class ValidationError(JobError):
    """The request body breaks the job schema; nothing was deposited."""


@dataclass
class JobRecord:
    """Mutable progress ledger for one submitted job."""

    job_id: str
    workload_id: str
    mode: str
    speaker_id: str | None
    state: str = "queued"  # queued / running / done / failed
    stage: str | None = None
    created_at: float = field(default_factory=time.time)
    finished_at: float | None = None
    result: dict | None = None
    error: str | None = None


class JobManager:
    """Validates, launches and tracks jobs for one hosting node."""

    def __init__(self, node: GipsyNode, result_timeout: float = 600.0) -> None:
        self._node = node
        self._result_timeout = result_timeout
        self._lock = threading.Lock()
        self._jobs: dict[str, JobRecord] = {}
        self._set_locks: dict[str, threading.Lock] = {}

    # -- submission -------------------------------------------------------

    def submit(self, body) -> str:
        """Validate a job request and start it; returns the job id.

        Raises:
            ValidationError: schema violation, including train without a
                speaker_id; checked before any demand exists.
            UnknownWorkload: workload not registered on this node.
            BadInput: input bytes undecodable in the claimed format.
        """
        if not isinstance(body, dict):
            raise ValidationError("job body must be a JSON object")
        workload_id = body.get("workload", "dmarf")
        if not isinstance(workload_id, str) or not workload_id:
            raise ValidationError("workload must be a non-empty string")
        workload = self._workloads().get(workload_id)
        if workload is None:
            raise UnknownWorkload(workload_id)

        mode = body.get("mode")
        if mode not in JOB_MODES:
            raise ValidationError(
                f"mode must be one of {'/'.join(JOB_MODES)}, got {mode!r}"
            )
        speaker_id = body.get("speaker_id")
        if speaker_id is not None and not isinstance(speaker_id, str):
            raise ValidationError("speaker_id must be a string")
        if mode == "train" and not speaker_id:
            raise ValidationError("train jobs require a speaker_id")

        audio_format = body.get("format", "pcm16le")
        if audio_format not in AUDIO_FORMATS:
            raise ValidationError(
                f"format must be one of {'/'.join(AUDIO_FORMATS)}, "
                f"got {audio_format!r}"
            )
        encoded = body.get("input")
        if not isinstance(encoded, str) or not encoded:
            raise ValidationError("input must be base64-encoded audio bytes")
        try:
            audio = base64.b64decode(encoded, validate=True)
        except (binascii.Error, ValueError) as exc:
            raise BadInput(f"input is not valid base64: {exc}") from None

        params = self._parse_params(body.get("params"))
        filename = self._set_filename(params)
        try:
            load_sample(audio, audio_format)
        except PipelineError as exc:
            raise BadInput(str(exc)) from None

        record = JobRecord(
            job_id=str(uuid.uuid4()),
            workload_id=workload_id,
            mode=mode,
            speaker_id=speaker_id,
        )
        with self._lock:
            self._jobs[record.job_id] = record
        threading.Thread(
            target=self._run,
            args=(record, workload, audio, audio_format, params, filename),
            name=f"job-{record.job_id[:8]}",
            daemon=True,
        ).start()
        return record.job_id

    def _parse_params(self, raw) -> ModuleParams:
        """Module parameter vectors from the request, defaults filled in."""
        params = default_params(FFT)
        if raw is None:
            return params
        if not isinstance(raw, dict):
            raise ValidationError("params must be an object of parameter vectors")
        for key, value in raw.items():
            slot = _PARAM_SLOTS.get(key)
            if slot is None:
                raise ValidationError(f"unknown params key {key!r}")
            if not isinstance(value, list) or not all(
                isinstance(item, (bool, int, float, str)) for item in value
            ):
                raise ValidationError(f"params.{key} must be a list of scalars")
            params.set_params(list(value), slot)
        return params

    @staticmethod
    def _set_filename(params: ModuleParams) -> str:
        """The training-set name these parameters select; also validates
        that both method ids are present and integral."""
        feature = params.feature_extraction_params
        if not feature or not isinstance(feature[0], int) or isinstance(feature[0], bool):
            raise ValidationError(
                "params.feature_extraction must start with a method id"
            )
        classification = params.classification_params
        if (
            not classification
            or not isinstance(classification[0], int)
            or isinstance(classification[0], bool)
        ):
            raise ValidationError(
                "params.classification must start with a classifier id"
            )
        flags = derive_preprocessing_flags(params.preprocessing_params)
        return training_set_filename(
            classifier_name(classification[0]),
            PREPROCESSING_METHOD_ID,
            feature[0],
            flags,
        )

    def _workloads(self) -> dict[str, WorkloadDefinition]:
        built_in = dmarf_workload()
        table = {built_in.workload_id: built_in}
        table[self._node.workload.workload_id] = self._node.workload
        return table

    # -- execution --------------------------------------------------------

    def _run(
        self,
        record: JobRecord,
        workload: WorkloadDefinition,
        audio: bytes,
        audio_format: str,
        params: ModuleParams,
        filename: str,
    ) -> None:
        record.state = "running"
        try:
            if record.mode == "train":
                with self._training_lock(filename):
                    result = self._drive(
                        record, workload, audio, audio_format, params, filename
                    )
            else:
                result = self._drive(
                    record, workload, audio, audio_format, params, filename
                )
            record.result = result
            record.state = "done"
        except Exception as exc:
            record.error = str(exc)
            record.state = "failed"
        finally:
            record.finished_at = time.time()

    def _drive(
        self,
        record: JobRecord,
        workload: WorkloadDefinition,
        audio: bytes,
        audio_format: str,
        params: ModuleParams,
        filename: str,
    ) -> dict:
        node = self._node
        ts_bytes = node.training_sets.get(filename)
        if ts_bytes is None:
            ts_bytes = encode_training_set(empty_training_set(params))
        payload = initial_payload(
            record.mode, audio, audio_format, params, record.speaker_id, ts_bytes
        )

        def note_stage(stage_id: str) -> None:
            record.stage = stage_id

        handle = self._generator_host().submit(
            payload,
            workload=workload,
            job_id=record.job_id,
            progress=note_stage,
        )
        envelope = decode_stage_payload(handle.result(timeout=self._result_timeout))
        if record.mode == "train":
            ts = decode_training_set(envelope.body)
            node.training_sets[filename] = envelope.body
            return {
                "training_set": filename,
                "speakers": list(ts.speaker_ids()),
                "vectors": sum(model.count for model in ts.models),
            }
        rs = decode_result_set(envelope.body)
        return {
            "ranking": [
                {"speaker_id": speaker, "distance": distance}
                for speaker, distance in rs.entries
            ],
            "top": rs.entries[0][0] if rs.entries else None,
        }

    def _generator_host(self):
        # The hosting node grows a generator tier on first use rather
        # than requiring one in tiers.initial.
        controller = self._node.controllers[TierIdentity.DGT]
        with self._lock:
            if controller.count == 0:
                add_tier(self._node, TierIdentity.DGT)
        return controller.any_host()

    def _training_lock(self, filename: str) -> threading.Lock:
        with self._lock:
            return self._set_locks.setdefault(filename, threading.Lock())

    # -- views ------------------------------------------------------------

    def job_view(self, job_id: str) -> dict:
        with self._lock:
            record = self._jobs.get(job_id)
        if record is None:
            raise UnknownJob(job_id)
        return self._view(record, full=True)

    def jobs_view(self) -> list[dict]:
        with self._lock:
            records = list(self._jobs.values())
        return [self._view(record, full=False) for record in records]

    @staticmethod
    def _view(record: JobRecord, full: bool) -> dict:
        view = {
            "job_id": record.job_id,
            "workload": record.workload_id,
            "mode": record.mode,
            "stage": record.stage,
            "state": record.state,
            "result_ready": record.result is not None,
        }
        if full:
            view.update(
                speaker_id=record.speaker_id,
                created_at=record.created_at,
                finished_at=record.finished_at,
                result=record.result,
                error=record.error,
            )
        return view
