"""The generator loop: drive a chain workload demand by demand.

For each stage in order, the generator deposits a demand whose payload is
the previous stage's result bytes, then waits on the result by signature.
A cached deposit response short-circuits the wait entirely; that is how
an already-computed job resolves without a single execution.
"""

from __future__ import annotations

import logging
import threading
import uuid

from .demands import DemandType, new_demand
from .errors import EdurtError
from .transport import DemandDispatcher, ERR_DEMAND_FAILED
from .wire import (
    AckMsg,
    CachedMsg,
    CoalescedMsg,
    DepositDemandMsg,
    ErrMsg,
    NotReadyMsg,
    WithdrawResultMsg,
)
from .workload import WorkloadDefinition

__all__ = ["StageFailed", "JobHandle", "run_generator", "DEFAULT_WAIT_SLICE_MS"]

logger = logging.getLogger(__name__)

# Result waits are sliced so a stopped generator notices promptly and so
# the transport read deadline stays bounded.
DEFAULT_WAIT_SLICE_MS = 1000


class StageFailed(EdurtError):
    def __init__(self, stage_id: str, cause: str) -> None:
        super().__init__(f"stage {stage_id!r} failed: {cause}")
        self.stage_id = stage_id
        self.cause = cause


class JobHandle:
    """Resolves to the final stage's result bytes, or the failure."""

    def __init__(self, job_id: str) -> None:
        self.job_id = job_id
        self._done = threading.Event()
        self._result: bytes | None = None
        self._error: Exception | None = None

    def is_done(self) -> bool:
        return self._done.is_set()

    def result(self, timeout: float | None = None) -> bytes:
        """Block until the job resolves.

        Raises:
            StageFailed: a stage's demand failed, or the generator stopped.
            TimeoutError: the job did not resolve within timeout.
        """
        if not self._done.wait(timeout):
            raise TimeoutError(f"job {self.job_id} still running")
        if self._error is not None:
            raise self._error
        assert self._result is not None
        return self._result

    def _resolve(self, result: bytes) -> None:
        self._result = result
        self._done.set()

    def _fail(self, error: Exception) -> None:
        self._error = error
        self._done.set()


def run_generator(
    dispatcher: DemandDispatcher,
    workload: WorkloadDefinition,
    payload: bytes,
    *,
    job_id: str | None = None,
    content_kind: str = "application/octet-stream",
    wait_slice_ms: int = DEFAULT_WAIT_SLICE_MS,
    stop_event: threading.Event | None = None,
    owns_dispatcher: bool = False,
    progress=None,
) -> JobHandle:
    """Start a background thread driving the workload; returns immediately.

    The stop_event, when set, makes the handle fail with StageFailed at
    the next wait slice; the hosting tier uses it for bounded shutdown.
    With owns_dispatcher the driving thread closes the dispatcher once
    the job resolves, so each job can ride its own connection.
    """
    handle = JobHandle(job_id if job_id is not None else str(uuid.uuid4()))
    stop = stop_event if stop_event is not None else threading.Event()

    def drive() -> None:
        current = payload
        try:
            for stage in workload.stages:
                if progress is not None:
                    progress(stage.stage_id)
                current = _run_stage(
                    dispatcher, workload, stage.stage_id, current,
                    content_kind, wait_slice_ms, stop,
                )
            handle._resolve(current)
        except Exception as exc:
            handle._fail(exc)
        finally:
            if owns_dispatcher:
                dispatcher.close()

    thread = threading.Thread(
        target=drive, name=f"generator-{handle.job_id[:8]}", daemon=True
    )
    thread.start()
    return handle


def _run_stage(
    dispatcher: DemandDispatcher,
    workload: WorkloadDefinition,
    stage_id: str,
    payload: bytes,
    content_kind: str,
    wait_slice_ms: int,
    stop: threading.Event,
) -> bytes:
    demand = new_demand(
        workload.workload_id,
        stage_id,
        DemandType.PROCEDURAL,
        payload,
        content_kind=content_kind,
    )
    response = dispatcher.dispatch(DepositDemandMsg(demand))
    if isinstance(response, CachedMsg):
        return response.result
    if isinstance(response, ErrMsg):
        raise StageFailed(stage_id, response.message)
    if isinstance(response, CoalescedMsg):
        logger.debug("stage %s coalesced into demand %s", stage_id, response.demand_id)
    # Queued or coalesced: either way the result arrives under this
    # signature, deposited by whichever worker completes the live demand.
    while True:
        if stop.is_set():
            raise StageFailed(stage_id, "generator stopped")
        response = dispatcher.dispatch(
            WithdrawResultMsg(demand.signature, wait=True, timeout_ms=wait_slice_ms)
        )
        if isinstance(response, AckMsg):
            return response.payload
        if isinstance(response, ErrMsg):
            if response.code == ERR_DEMAND_FAILED:
                raise StageFailed(stage_id, response.message)
            raise StageFailed(stage_id, f"{response.code}: {response.message}")
        assert isinstance(response, NotReadyMsg)
