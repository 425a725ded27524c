"""Demand values: identifiers, signatures, types, and the lifecycle state machine.

A demand is the unit of work in a demand-driven runtime: nothing executes
unless something deposited a demand for it. Demand values are immutable
snapshots; every lifecycle change goes through :func:`transition`, which
returns a new value. All shared-state bookkeeping lives in the store.

States and the events that move between them:

    Pending   --Withdraw-->      InProcess
    Pending   --Exhaust-->       Failed
    InProcess --DepositResult--> Completed
    InProcess --LeaseExpire-->   Pending
    InProcess --Exhaust-->       Failed

Completed and Failed are terminal. Any other (state, event) pair raises
IllegalTransition: a duplicate delivery or a caller bug, never ignored.
"""

from __future__ import annotations

import hashlib
import struct
import uuid
from dataclasses import dataclass, replace
from enum import Enum

from .clock import monotonic_ms
from .encoding import RecordError, RecordReader, RecordWriter
from .errors import EdurtError

__all__ = [
    "DemandError",
    "IllegalTransition",
    "UnsupportedDemandType",
    "DemandType",
    "DemandState",
    "DemandSignature",
    "Demand",
    "Withdraw",
    "DepositResult",
    "LeaseExpire",
    "Exhaust",
    "DemandEvent",
    "new_demand_id",
    "compute_signature",
    "new_demand",
    "transition",
    "encode_demand",
    "decode_demand",
]

DIGEST_SIZE = 32


class DemandError(EdurtError):
    pass


class IllegalTransition(DemandError):
    """An event arrived that is not legal for the demand's current state."""

    def __init__(self, state: DemandState, event: object) -> None:
        super().__init__(
            f"no transition from {state.value} on {type(event).__name__}"
        )
        self.state = state
        self.event = event


class UnsupportedDemandType(DemandError):
    """Workers execute Procedural demands only; the rest of the taxonomy is
    representable and transportable but has no execution semantics here."""


class DemandType(Enum):
    INTENSIONAL = "intensional"
    PROCEDURAL = "procedural"
    RESOURCE = "resource"
    SYSTEM = "system"


class DemandState(Enum):
    # Values double as the display labels used by the management API.
    PENDING = "PENDING"
    IN_PROCESS = "INPROCESS"
    COMPLETED = "COMPLETED"
    FAILED = "FAILED"


@dataclass(frozen=True)
class DemandSignature:
    """Content identity of a computation: equal inputs share a signature."""

    workload_id: str
    stage_id: str
    input_digest: bytes

    def hex(self) -> str:
        return self.input_digest.hex()


@dataclass(frozen=True)
class Demand:
    """One requested computation and its lifecycle bookkeeping.

    Timestamps are monotonic milliseconds from the clock of the process
    that stamped them; only the store compares lease_deadline values, and
    always against its own clock.
    """

    id: str
    signature: DemandSignature
    dtype: DemandType
    state: DemandState
    content_kind: str
    payload: bytes
    attempts: int = 0
    created_at: int = 0
    leased_at: int | None = None
    lease_deadline: int | None = None
    result: bytes | None = None


# Lifecycle events. Withdraw carries both lease fields because transition is
# pure and cannot read a clock; the store computes them from its own time.


@dataclass(frozen=True)
class Withdraw:
    lease_deadline: int
    leased_at: int


@dataclass(frozen=True)
class DepositResult:
    result: bytes


@dataclass(frozen=True)
class LeaseExpire:
    pass


@dataclass(frozen=True)
class Exhaust:
    pass


DemandEvent = Withdraw | DepositResult | LeaseExpire | Exhaust

_NEXT_STATE: dict[tuple[DemandState, type], DemandState] = {
    (DemandState.PENDING, Withdraw): DemandState.IN_PROCESS,
    (DemandState.PENDING, Exhaust): DemandState.FAILED,
    (DemandState.IN_PROCESS, DepositResult): DemandState.COMPLETED,
    (DemandState.IN_PROCESS, LeaseExpire): DemandState.PENDING,
    (DemandState.IN_PROCESS, Exhaust): DemandState.FAILED,
}


def new_demand_id() -> str:
    """Fresh 128-bit identifier in canonical 36-character text form."""
    return str(uuid.uuid4())


def compute_signature(workload_id: str, stage_id: str, payload: bytes) -> DemandSignature:
    """Derive the signature identifying this computation by its inputs.

    The digest is SHA-256 over the length-prefixed concatenation of the
    three fields: for each of workload_id (UTF-8), stage_id (UTF-8) and
    payload, an 8-byte big-endian byte length followed by the bytes
    themselves. The byte layout, not the hash algorithm, is the
    compatibility contract; see docs/protocol.md.
    """
    digest = hashlib.sha256()
    for field in (workload_id.encode("utf-8"), stage_id.encode("utf-8"), payload):
        digest.update(struct.pack(">Q", len(field)))
        digest.update(field)
    return DemandSignature(workload_id, stage_id, digest.digest())


def new_demand(
    workload_id: str,
    stage_id: str,
    dtype: DemandType,
    payload: bytes,
    *,
    content_kind: str = "application/octet-stream",
    created_at: int | None = None,
) -> Demand:
    """Construct a Pending demand with a fresh id and computed signature.

    Whether (workload_id, stage_id) names a real stage is checked at
    deposit time by the store, not here; construction is pure.
    """
    return Demand(
        id=new_demand_id(),
        signature=compute_signature(workload_id, stage_id, payload),
        dtype=dtype,
        state=DemandState.PENDING,
        content_kind=content_kind,
        payload=payload,
        attempts=0,
        created_at=monotonic_ms() if created_at is None else created_at,
    )


def transition(demand: Demand, event: DemandEvent) -> Demand:
    """Apply one lifecycle event, returning the updated demand.

    Raises:
        IllegalTransition: if the event is not legal for demand.state.
    """
    next_state = _NEXT_STATE.get((demand.state, type(event)))
    if next_state is None:
        raise IllegalTransition(demand.state, event)
    if isinstance(event, Withdraw):
        return replace(
            demand,
            state=next_state,
            attempts=demand.attempts + 1,
            leased_at=event.leased_at,
            lease_deadline=event.lease_deadline,
        )
    if isinstance(event, DepositResult):
        return replace(demand, state=next_state, result=event.result, lease_deadline=None)
    # LeaseExpire and Exhaust both just drop the lease.
    return replace(demand, state=next_state, lease_deadline=None)


# Canonical binary encoding, used on the wire and in snapshots. Field order
# and widths are documented in docs/protocol.md; changing either breaks the
# compatibility contract.

_TYPE_CODES: dict[DemandType, int] = {
    DemandType.INTENSIONAL: 1,
    DemandType.PROCEDURAL: 2,
    DemandType.RESOURCE: 3,
    DemandType.SYSTEM: 4,
}
_TYPES_BY_CODE = {code: dtype for dtype, code in _TYPE_CODES.items()}

_STATE_CODES: dict[DemandState, int] = {
    DemandState.PENDING: 1,
    DemandState.IN_PROCESS: 2,
    DemandState.COMPLETED: 3,
    DemandState.FAILED: 4,
}
_STATES_BY_CODE = {code: state for state, code in _STATE_CODES.items()}


def encode_demand(demand: Demand) -> bytes:
    writer = RecordWriter()
    writer.raw(uuid.UUID(demand.id).bytes)
    writer.text(demand.signature.workload_id)
    writer.text(demand.signature.stage_id)
    writer.raw(demand.signature.input_digest)
    writer.u8(_TYPE_CODES[demand.dtype])
    writer.u8(_STATE_CODES[demand.state])
    writer.text(demand.content_kind)
    writer.blob(demand.payload)
    writer.u32(demand.attempts)
    writer.u64(demand.created_at)
    writer.opt_u64(demand.leased_at)
    writer.opt_u64(demand.lease_deadline)
    writer.opt_blob(demand.result)
    return writer.done()


def decode_demand(data: bytes) -> Demand:
    reader = RecordReader(data)
    demand = _read_demand(reader)
    reader.expect_end()
    return demand


def _read_demand(reader: RecordReader) -> Demand:
    demand_id = str(uuid.UUID(bytes=reader.raw(16)))
    workload_id = reader.text()
    stage_id = reader.text()
    input_digest = reader.raw(DIGEST_SIZE)
    type_code = reader.u8()
    state_code = reader.u8()
    if type_code not in _TYPES_BY_CODE:
        raise RecordError(f"unknown demand type code {type_code}")
    if state_code not in _STATES_BY_CODE:
        raise RecordError(f"unknown demand state code {state_code}")
    return Demand(
        id=demand_id,
        signature=DemandSignature(workload_id, stage_id, input_digest),
        dtype=_TYPES_BY_CODE[type_code],
        state=_STATES_BY_CODE[state_code],
        content_kind=reader.text(),
        payload=reader.blob(),
        attempts=reader.u32(),
        created_at=reader.u64(),
        leased_at=reader.opt_u64(),
        lease_deadline=reader.opt_u64(),
        result=reader.opt_blob(),
    )
