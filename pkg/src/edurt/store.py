"""The demand store: pending queues, in-process leases, and the result warehouse.

This is the single coordination point of the runtime. All operations are
atomic under one lock; the only blocking call, withdraw_result with
wait=True, waits on a condition variable and therefore never holds the
lock while sleeping. Completed results are memoized by demand signature:
the warehouse is monotone, first writer wins, and a signature that is
already in the warehouse never re-enters the pending queues.
"""

from __future__ import annotations

import itertools
import logging
import threading
from collections import deque
from dataclasses import dataclass
from typing import Iterable

from .clock import Clock, monotonic_ms
from .demands import (
    Demand,
    DemandSignature,
    DemandState,
    DepositResult,
    Exhaust,
    LeaseExpire,
    Withdraw,
    transition,
)
from .errors import EdurtError

__all__ = [
    "StoreError",
    "UnknownStage",
    "UnknownDemand",
    "Queued",
    "Coalesced",
    "CachedResult",
    "Result",
    "NotReady",
    "TimedOut",
    "Failed",
    "DemandStore",
    "DEFAULT_LEASE_MS",
    "DEFAULT_MAX_ATTEMPTS",
]

logger = logging.getLogger(__name__)

DEFAULT_LEASE_MS = 5000
DEFAULT_MAX_ATTEMPTS = 3


class StoreError(EdurtError):
    pass


class UnknownStage(StoreError):
    def __init__(self, workload_id: str, stage_id: str) -> None:
        super().__init__(f"no registered stage {workload_id}/{stage_id}")
        self.workload_id = workload_id
        self.stage_id = stage_id


class UnknownDemand(StoreError):
    """The demand id is not under lease; a late deposit lands here and the
    caller's work is discarded (first writer already won)."""

    def __init__(self, demand_id: str) -> None:
        super().__init__(f"demand {demand_id} is not in process")
        self.demand_id = demand_id


# Deposit outcomes.


@dataclass(frozen=True)
class Queued:
    demand_id: str


@dataclass(frozen=True)
class Coalesced:
    """A live demand with an equal signature already exists; its id is returned."""

    demand_id: str


@dataclass(frozen=True)
class CachedResult:
    result: bytes


# withdraw_result outcomes.


@dataclass(frozen=True)
class Result:
    result: bytes


@dataclass(frozen=True)
class NotReady:
    pass


@dataclass(frozen=True)
class TimedOut:
    pass


@dataclass(frozen=True)
class Failed:
    """The demand behind this signature exhausted its attempts.

    Not part of the minimal outcome triple, but waiters have to be told
    about failure or they would block forever; generators translate this
    into a stage failure.
    """

    reason: str


class DemandStore:
    """Thread-safe demand store with per-(workload, stage) FIFO queues."""

    def __init__(
        self,
        *,
        lease_ms: int = DEFAULT_LEASE_MS,
        max_attempts: int = DEFAULT_MAX_ATTEMPTS,
        clock: Clock = monotonic_ms,
    ) -> None:
        if lease_ms <= 0:
            raise ValueError("lease_ms must be positive")
        if max_attempts <= 0:
            raise ValueError("max_attempts must be positive")
        self.lease_ms = lease_ms
        self.max_attempts = max_attempts
        self._clock = clock
        self._lock = threading.Lock()
        self._results_ready = threading.Condition(self._lock)
        self._stages: dict[str, tuple[str, ...]] = {}
        self._pending: dict[tuple[str, str], deque[tuple[int, Demand]]] = {}
        self._in_process: dict[str, Demand] = {}
        self._warehouse: dict[DemandSignature, bytes] = {}
        self._live_by_signature: dict[DemandSignature, str] = {}
        self._failed_by_signature: dict[DemandSignature, Demand] = {}
        self._live_seq: dict[str, int] = {}
        self._seq = itertools.count()
        # Listing index: every demand ever queued, in deposit order, with its
        # latest snapshot. Cursors over this stay stable because it only grows.
        self._history: dict[str, Demand] = {}
        self._order: list[str] = []
        self._counters = {
            "deposits": 0,
            "withdrawals": 0,
            "cache_hits": 0,
            "requeues": 0,
            "failures": 0,
            "coalesced": 0,
            "completed": 0,
            "polls": 0,
        }
        self._sweeper: threading.Thread | None = None
        self._sweeper_stop = threading.Event()
        # Optional instrumentation: when set, every operation appends one
        # (op, args, outcome) entry under the store lock, in execution order.
        self.oplog: list[tuple] | None = None

    # -- workload registration -------------------------------------------

    def register_workload(self, workload_id: str, stage_ids: Iterable[str]) -> None:
        stages = tuple(stage_ids)
        if not stages:
            raise ValueError("workload must declare at least one stage")
        with self._lock:
            self._stages[workload_id] = stages
            for stage_id in stages:
                self._pending.setdefault((workload_id, stage_id), deque())

    def registered_workloads(self) -> dict[str, tuple[str, ...]]:
        with self._lock:
            return dict(self._stages)

    # -- core operations -------------------------------------------------

    def deposit_demand(self, demand: Demand) -> Queued | Coalesced | CachedResult:
        if demand.state is not DemandState.PENDING:
            raise ValueError(
                f"only Pending demands can be deposited, got {demand.state.value}"
            )
        signature = demand.signature
        key = (signature.workload_id, signature.stage_id)
        with self._lock:
            stages = self._stages.get(signature.workload_id)
            if stages is None or signature.stage_id not in stages:
                raise UnknownStage(signature.workload_id, signature.stage_id)
            self._counters["deposits"] += 1
            cached = self._warehouse.get(signature)
            if cached is not None:
                self._counters["cache_hits"] += 1
                self._log_op("deposit", demand.id, "cached")
                return CachedResult(cached)
            live_id = self._live_by_signature.get(signature)
            if live_id is not None:
                self._counters["coalesced"] += 1
                self._log_op("deposit", demand.id, f"coalesced:{live_id}")
                return Coalesced(live_id)
            seq = next(self._seq)
            self._pending[key].append((seq, demand))
            self._live_by_signature[signature] = demand.id
            self._live_seq[demand.id] = seq
            # A fresh deposit supersedes any earlier failure of this signature.
            self._failed_by_signature.pop(signature, None)
            self._history[demand.id] = demand
            self._order.append(demand.id)
            self._log_op("deposit", demand.id, "queued")
            return Queued(demand.id)

    def withdraw_demand(
        self, workload_id: str, stage_filter: set[str] | None = None
    ) -> Demand | None:
        """Pop the oldest pending demand for the workload, lease it, return it.

        Absence is a value: an empty or unknown queue returns None.
        """
        with self._lock:
            self._counters["polls"] += 1
            best_key: tuple[str, str] | None = None
            best_seq = -1
            for key, queue in self._pending.items():
                if key[0] != workload_id or not queue:
                    continue
                if stage_filter is not None and key[1] not in stage_filter:
                    continue
                head_seq = queue[0][0]
                if best_key is None or head_seq < best_seq:
                    best_key, best_seq = key, head_seq
            if best_key is None:
                self._log_op("withdraw", workload_id, "absent")
                return None
            seq, demand = self._pending[best_key].popleft()
            now = self._clock()
            leased = transition(
                demand, Withdraw(lease_deadline=now + self.lease_ms, leased_at=now)
            )
            self._in_process[leased.id] = leased
            self._live_seq[leased.id] = seq
            self._counters["withdrawals"] += 1
            self._history[leased.id] = leased
            self._log_op("withdraw", workload_id, leased.id)
            return leased

    def deposit_result(self, demand_id: str, result: bytes) -> None:
        with self._lock:
            demand = self._in_process.get(demand_id)
            if demand is None:
                self._log_op("deposit_result", demand_id, "unknown")
                raise UnknownDemand(demand_id)
            completed = transition(demand, DepositResult(result))
            del self._in_process[demand_id]
            self._live_by_signature.pop(completed.signature, None)
            self._live_seq.pop(demand_id, None)
            self._warehouse[completed.signature] = result
            self._counters["completed"] += 1
            self._history[demand_id] = completed
            self._log_op("deposit_result", demand_id, "completed")
            self._results_ready.notify_all()

    def withdraw_result(
        self,
        signature: DemandSignature,
        wait: bool = False,
        timeout_ms: int = 0,
    ) -> Result | NotReady | TimedOut | Failed:
        with self._lock:
            deadline = self._clock() + timeout_ms
            while True:
                cached = self._warehouse.get(signature)
                if cached is not None:
                    self._log_op("withdraw_result", signature.hex()[:12], "result")
                    return Result(cached)
                failed = self._failed_by_signature.get(signature)
                if failed is not None:
                    self._log_op("withdraw_result", signature.hex()[:12], "failed")
                    return Failed(
                        f"demand for {signature.workload_id}/{signature.stage_id} "
                        f"failed after {failed.attempts} attempts"
                    )
                if not wait:
                    self._log_op("withdraw_result", signature.hex()[:12], "not_ready")
                    return NotReady()
                remaining_ms = deadline - self._clock()
                if remaining_ms <= 0:
                    self._log_op("withdraw_result", signature.hex()[:12], "timed_out")
                    return TimedOut()
                # Releases the lock while sleeping.
                self._results_ready.wait(remaining_ms / 1000.0)

    def requeue_expired(self, now: int | None = None) -> tuple[int, int]:
        """Return expired leases to the front of their queues, or fail them.

        Returns (requeued_count, failed_count) for this sweep.
        """
        with self._lock:
            if now is None:
                now = self._clock()
            expired = [
                demand
                for demand in self._in_process.values()
                if demand.lease_deadline is not None and demand.lease_deadline < now
            ]
            # Process youngest first so that after the appendlefts the oldest
            # expired demand sits at the very front of its queue.
            expired.sort(key=lambda d: self._live_seq[d.id], reverse=True)
            requeued = 0
            failed = 0
            for demand in expired:
                del self._in_process[demand.id]
                key = (demand.signature.workload_id, demand.signature.stage_id)
                if demand.attempts < self.max_attempts:
                    reset = transition(demand, LeaseExpire())
                    self._pending[key].appendleft((self._live_seq[demand.id], reset))
                    self._history[demand.id] = reset
                    requeued += 1
                else:
                    exhausted = transition(demand, Exhaust())
                    self._failed_by_signature[demand.signature] = exhausted
                    self._live_by_signature.pop(demand.signature, None)
                    self._live_seq.pop(demand.id, None)
                    self._history[demand.id] = exhausted
                    failed += 1
                    logger.warning(
                        "demand %s failed after %d attempts", demand.id, demand.attempts
                    )
            self._counters["requeues"] += requeued
            self._counters["failures"] += failed
            if failed:
                # Waiters on a failed signature are woken and told about it.
                self._results_ready.notify_all()
            self._log_op("requeue_expired", now, (requeued, failed))
            return (requeued, failed)

    def store_stats(self) -> dict:
        """Consistent point-in-time snapshot of counters and depths."""
        with self._lock:
            queues = {
                f"{workload}/{stage}": len(queue)
                for (workload, stage), queue in self._pending.items()
            }
            return {
                "deposits": self._counters["deposits"],
                "withdrawals": self._counters["withdrawals"],
                "cache_hits": self._counters["cache_hits"],
                "requeues": self._counters["requeues"],
                "failures": self._counters["failures"],
                "coalesced": self._counters["coalesced"],
                "completed": self._counters["completed"],
                "polls": self._counters["polls"],
                "pending": queues,
                "in_process": len(self._in_process),
                "warehouse_size": len(self._warehouse),
            }

    # -- listing and snapshot support ------------------------------------

    def list_demands(
        self,
        state: DemandState | None = None,
        stage: str | None = None,
        cursor: int = 0,
        limit: int = 50,
    ) -> tuple[list[Demand], int | None]:
        """Page through all demands ever queued, in stable deposit order.

        Returns (page, next_cursor); next_cursor is None on the last page.
        """
        if cursor < 0 or limit <= 0:
            raise ValueError("cursor must be >= 0 and limit positive")
        with self._lock:
            page: list[Demand] = []
            position = cursor
            while position < len(self._order) and len(page) < limit:
                demand = self._history[self._order[position]]
                position += 1
                if state is not None and demand.state is not state:
                    continue
                if stage is not None and demand.signature.stage_id != stage:
                    continue
                page.append(demand)
            next_cursor = position if position < len(self._order) else None
            return page, next_cursor

    def warehouse_records(self) -> list[tuple[DemandSignature, bytes]]:
        with self._lock:
            return list(self._warehouse.items())

    def load_warehouse_records(
        self, records: Iterable[tuple[DemandSignature, bytes]]
    ) -> int:
        """Install restored results; existing entries win (monotone warehouse)."""
        loaded = 0
        with self._lock:
            if self._in_process:
                raise StoreError(
                    "cannot restore while demands are in process"
                )
            for signature, result in records:
                if signature not in self._warehouse:
                    self._warehouse[signature] = result
                    loaded += 1
            self._results_ready.notify_all()
            return loaded

    # -- background sweep ------------------------------------------------

    def start_sweeper(self) -> None:
        """Run requeue_expired every lease_ms/2 until stop_sweeper."""
        if self._sweeper is not None:
            return
        self._sweeper_stop.clear()
        interval = self.lease_ms / 2000.0

        def sweep() -> None:
            while not self._sweeper_stop.wait(interval):
                try:
                    self.requeue_expired()
                except Exception:
                    logger.exception("lease sweep failed")

        self._sweeper = threading.Thread(target=sweep, name="store-sweeper", daemon=True)
        self._sweeper.start()

    def stop_sweeper(self) -> None:
        if self._sweeper is None:
            return
        self._sweeper_stop.set()
        self._sweeper.join(timeout=5)
        self._sweeper = None

    # -- internals -------------------------------------------------------

    def _log_op(self, op: str, subject, outcome) -> None:
        if self.oplog is not None:
            self.oplog.append((op, subject, outcome))
