"""The worker loop: withdraw a demand, run its executor, deposit the result.

A worker serves one workload. It resolves each withdrawn demand's stage
to an executor through the workload definition, runs it on the payload,
and deposits the result bytes. Failures never deposit anything: the lease
simply lapses and the store's sweep requeues or fails the demand, so a
crashing executor is indistinguishable from a crashed worker process.
"""

from __future__ import annotations

import logging
import threading
from typing import Callable

from .demands import Demand, DemandType, UnsupportedDemandType, decode_demand
from .transport import DemandDispatcher
from .wire import AckMsg, DepositResultMsg, ErrMsg, NotReadyMsg, WithdrawDemandMsg
from .workload import WorkloadDefinition

__all__ = ["WorkerLoop", "DEFAULT_POLL_INTERVAL"]

logger = logging.getLogger(__name__)

# How long to sleep after finding the queue empty; trade-off between
# pickup latency and store poll traffic.
DEFAULT_POLL_INTERVAL = 0.1


class WorkerLoop:
    """One withdrawing tier loop running on its own thread.

    The fault_hook exists for tests: called with each withdrawn demand, a
    True return makes the worker abandon the lease without executing,
    simulating a crash between withdrawal and deposit.
    """

    def __init__(
        self,
        dispatcher: DemandDispatcher,
        workload: WorkloadDefinition,
        executors: dict[str, Callable[[bytes], bytes]],
        stage_filter: tuple[str, ...] | None = None,
        poll_interval: float = DEFAULT_POLL_INTERVAL,
        fault_hook: Callable[[Demand], bool] | None = None,
        name: str = "worker",
    ) -> None:
        stages = stage_filter if stage_filter else workload.stage_ids()
        for stage_id in stages:
            executor_id = workload.stage(stage_id).executor_id
            if executor_id not in executors:
                raise ValueError(
                    f"stage {stage_id!r} needs executor {executor_id!r}, "
                    "which is not registered"
                )
        self._dispatcher = dispatcher
        self._workload = workload
        self._executors = executors
        self._stage_filter = tuple(stage_filter) if stage_filter else None
        self._poll_interval = poll_interval
        self._fault_hook = fault_hook
        self._name = name
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None
        self._is_working = False
        self.executions = 0

    @property
    def is_working(self) -> bool:
        """True exactly while an executor runs on a withdrawn demand."""
        return self._is_working

    @property
    def is_running(self) -> bool:
        return self._thread is not None and self._thread.is_alive()

    def start_worker(self) -> None:
        if self._thread is not None:
            return
        self._stop.clear()
        self._thread = threading.Thread(
            target=self._run, name=self._name, daemon=True
        )
        self._thread.start()

    def stop_worker(self, timeout: float = 10.0) -> None:
        """Let the in-flight demand finish, then stop the loop."""
        if self._thread is None:
            return
        self._stop.set()
        self._thread.join(timeout=timeout)
        self._thread = None
        self._dispatcher.close()

    def _run(self) -> None:
        while not self._stop.is_set():
            try:
                demand = self._withdraw_one()
            except Exception:
                # Store unreachable beyond the dispatcher's retry budget,
                # or a protocol fault. Back off and keep polling; workers
                # outlive store restarts.
                logger.exception("%s: withdraw failed", self._name)
                self._stop.wait(self._poll_interval)
                continue
            if demand is None:
                self._stop.wait(self._poll_interval)
                continue
            self._process(demand)

    def _withdraw_one(self) -> Demand | None:
        response = self._dispatcher.dispatch(
            WithdrawDemandMsg(self._workload.workload_id, self._stage_filter)
        )
        if isinstance(response, NotReadyMsg):
            return None
        if isinstance(response, ErrMsg):
            logger.warning("%s: withdraw rejected: %s", self._name, response.message)
            return None
        assert isinstance(response, AckMsg)
        return decode_demand(response.payload)

    def _process(self, demand: Demand) -> None:
        if self._fault_hook is not None and self._fault_hook(demand):
            logger.info("%s: fault hook abandoned demand %s", self._name, demand.id)
            return
        self._is_working = True
        try:
            result = self._execute(demand)
        except Exception:
            # Abandon the lease: no deposit, the sweep will requeue.
            logger.exception("%s: executor failed for demand %s", self._name, demand.id)
            return
        finally:
            self._is_working = False
        try:
            self._dispatcher.dispatch(DepositResultMsg(demand.id, result))
            self.executions += 1
        except Exception:
            logger.exception("%s: result deposit failed for %s", self._name, demand.id)

    def _execute(self, demand: Demand) -> bytes:
        if demand.dtype is not DemandType.PROCEDURAL:
            raise UnsupportedDemandType(
                f"cannot execute {demand.dtype.value} demand {demand.id}"
            )
        stage = self._workload.stage(demand.signature.stage_id)
        executor = self._executors[stage.executor_id]
        return executor(demand.payload)
