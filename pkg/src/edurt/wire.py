"""Wire protocol: framed request/response messages between tiers and the store.

Frame layout (big-endian, documented bit-exactly in docs/protocol.md):

    offset 0   4 bytes   magic 0x47 0x44 0x4D 0x53 ("GDMS")
    offset 4   1 byte    protocol version, 0x01
    offset 5   1 byte    message kind
    offset 6   8 bytes   correlation id
    offset 14  4 bytes   body length N
    offset 18  N bytes   kind-specific body

The frame layout is the compatibility contract. Bodies use the record
primitives from edurt.encoding; demand ids travel as 16 raw UUID bytes.
"""

from __future__ import annotations

import struct
import uuid
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, ClassVar, Union

from .demands import Demand, DemandSignature, decode_demand, encode_demand
from .encoding import RecordError, RecordReader, RecordWriter
from .errors import EdurtError

__all__ = [
    "MAGIC",
    "PROTOCOL_VERSION",
    "HEADER_SIZE",
    "TransportError",
    "BadMagic",
    "UnsupportedVersion",
    "TruncatedFrame",
    "UnknownKind",
    "ProtocolViolation",
    "MessageKind",
    "WireMessage",
    "DepositDemandMsg",
    "WithdrawDemandMsg",
    "DepositResultMsg",
    "WithdrawResultMsg",
    "RequeueExpiredMsg",
    "StoreStatsMsg",
    "AckMsg",
    "ErrMsg",
    "CachedMsg",
    "CoalescedMsg",
    "NotReadyMsg",
    "RESPONSE_KINDS",
    "with_correlation",
    "encode_frame",
    "decode_frame",
    "FrameDecoder",
]

MAGIC = b"GDMS"  # 0x47 0x44 0x4D 0x53
PROTOCOL_VERSION = 0x01
_HEADER = struct.Struct(">4sBBQI")
HEADER_SIZE = _HEADER.size  # 18
MAX_BODY_SIZE = 64 * 1024 * 1024  # sanity bound well under the u32 limit


class TransportError(EdurtError):
    pass


class BadMagic(TransportError):
    pass


class UnsupportedVersion(TransportError):
    pass


class TruncatedFrame(TransportError):
    pass


class UnknownKind(TransportError):
    pass


class ProtocolViolation(TransportError):
    """The peer answered with something the protocol does not allow here."""


class MessageKind(Enum):
    DEPOSIT_DEMAND = 0x01
    WITHDRAW_DEMAND = 0x02
    DEPOSIT_RESULT = 0x03
    WITHDRAW_RESULT = 0x04
    REQUEUE_EXPIRED = 0x05
    STORE_STATS = 0x06
    ACK = 0x10
    ERR = 0x11
    CACHED = 0x12
    COALESCED = 0x13
    NOT_READY = 0x14


# Each request kind has exactly one legal set of response kinds; the
# dispatcher enforces this table on every exchange.
RESPONSE_KINDS: dict[MessageKind, frozenset[MessageKind]] = {
    MessageKind.DEPOSIT_DEMAND: frozenset(
        {MessageKind.ACK, MessageKind.CACHED, MessageKind.COALESCED, MessageKind.ERR}
    ),
    MessageKind.WITHDRAW_DEMAND: frozenset(
        {MessageKind.ACK, MessageKind.NOT_READY, MessageKind.ERR}
    ),
    MessageKind.DEPOSIT_RESULT: frozenset({MessageKind.ACK, MessageKind.ERR}),
    MessageKind.WITHDRAW_RESULT: frozenset(
        {MessageKind.ACK, MessageKind.NOT_READY, MessageKind.ERR}
    ),
    MessageKind.REQUEUE_EXPIRED: frozenset({MessageKind.ACK, MessageKind.ERR}),
    MessageKind.STORE_STATS: frozenset({MessageKind.ACK, MessageKind.ERR}),
}


def _pack_demand_id(demand_id: str) -> bytes:
    return uuid.UUID(demand_id).bytes


def _unpack_demand_id(raw: bytes) -> str:
    return str(uuid.UUID(bytes=raw))


@dataclass(frozen=True)
class DepositDemandMsg:
    demand: Demand
    correlation_id: int = 0
    kind: ClassVar[MessageKind] = MessageKind.DEPOSIT_DEMAND

    def encode_body(self) -> bytes:
        return encode_demand(self.demand)

    @staticmethod
    def decode_body(reader: RecordReader, correlation_id: int) -> DepositDemandMsg:
        body = reader.raw(reader.remaining())
        return DepositDemandMsg(decode_demand(body), correlation_id)


@dataclass(frozen=True)
class WithdrawDemandMsg:
    workload_id: str
    stage_filter: tuple[str, ...] | None = None
    correlation_id: int = 0
    kind: ClassVar[MessageKind] = MessageKind.WITHDRAW_DEMAND

    def encode_body(self) -> bytes:
        writer = RecordWriter().text(self.workload_id)
        if self.stage_filter is None:
            writer.u8(0)
        else:
            writer.u8(1).u32(len(self.stage_filter))
            for stage in self.stage_filter:
                writer.text(stage)
        return writer.done()

    @staticmethod
    def decode_body(reader: RecordReader, correlation_id: int) -> WithdrawDemandMsg:
        workload_id = reader.text()
        if reader.u8() == 0:
            return WithdrawDemandMsg(workload_id, None, correlation_id)
        count = reader.u32()
        stages = tuple(reader.text() for _ in range(count))
        return WithdrawDemandMsg(workload_id, stages, correlation_id)


@dataclass(frozen=True)
class DepositResultMsg:
    demand_id: str
    result: bytes
    correlation_id: int = 0
    kind: ClassVar[MessageKind] = MessageKind.DEPOSIT_RESULT

    def encode_body(self) -> bytes:
        return RecordWriter().raw(_pack_demand_id(self.demand_id)).blob(self.result).done()

    @staticmethod
    def decode_body(reader: RecordReader, correlation_id: int) -> DepositResultMsg:
        return DepositResultMsg(_unpack_demand_id(reader.raw(16)), reader.blob(), correlation_id)


@dataclass(frozen=True)
class WithdrawResultMsg:
    signature: DemandSignature
    wait: bool = False
    timeout_ms: int = 0
    correlation_id: int = 0
    kind: ClassVar[MessageKind] = MessageKind.WITHDRAW_RESULT

    def encode_body(self) -> bytes:
        return (
            RecordWriter()
            .text(self.signature.workload_id)
            .text(self.signature.stage_id)
            .raw(self.signature.input_digest)
            .u8(1 if self.wait else 0)
            .u64(self.timeout_ms)
            .done()
        )

    @staticmethod
    def decode_body(reader: RecordReader, correlation_id: int) -> WithdrawResultMsg:
        signature = DemandSignature(reader.text(), reader.text(), reader.raw(32))
        return WithdrawResultMsg(signature, reader.u8() == 1, reader.u64(), correlation_id)


@dataclass(frozen=True)
class RequeueExpiredMsg:
    now: int | None = None  # None = the store's own clock
    correlation_id: int = 0
    kind: ClassVar[MessageKind] = MessageKind.REQUEUE_EXPIRED

    def encode_body(self) -> bytes:
        return RecordWriter().opt_u64(self.now).done()

    @staticmethod
    def decode_body(reader: RecordReader, correlation_id: int) -> RequeueExpiredMsg:
        return RequeueExpiredMsg(reader.opt_u64(), correlation_id)


@dataclass(frozen=True)
class StoreStatsMsg:
    correlation_id: int = 0
    kind: ClassVar[MessageKind] = MessageKind.STORE_STATS

    def encode_body(self) -> bytes:
        return b""

    @staticmethod
    def decode_body(reader: RecordReader, correlation_id: int) -> StoreStatsMsg:
        return StoreStatsMsg(correlation_id)


@dataclass(frozen=True)
class AckMsg:
    """Success response; the payload layout depends on the request kind."""

    payload: bytes = b""
    correlation_id: int = 0
    kind: ClassVar[MessageKind] = MessageKind.ACK

    def encode_body(self) -> bytes:
        return RecordWriter().blob(self.payload).done()

    @staticmethod
    def decode_body(reader: RecordReader, correlation_id: int) -> AckMsg:
        return AckMsg(reader.blob(), correlation_id)


@dataclass(frozen=True)
class ErrMsg:
    code: str
    message: str = ""
    correlation_id: int = 0
    kind: ClassVar[MessageKind] = MessageKind.ERR

    def encode_body(self) -> bytes:
        return RecordWriter().text(self.code).text(self.message).done()

    @staticmethod
    def decode_body(reader: RecordReader, correlation_id: int) -> ErrMsg:
        return ErrMsg(reader.text(), reader.text(), correlation_id)


@dataclass(frozen=True)
class CachedMsg:
    result: bytes
    correlation_id: int = 0
    kind: ClassVar[MessageKind] = MessageKind.CACHED

    def encode_body(self) -> bytes:
        return RecordWriter().blob(self.result).done()

    @staticmethod
    def decode_body(reader: RecordReader, correlation_id: int) -> CachedMsg:
        return CachedMsg(reader.blob(), correlation_id)


@dataclass(frozen=True)
class CoalescedMsg:
    demand_id: str
    correlation_id: int = 0
    kind: ClassVar[MessageKind] = MessageKind.COALESCED

    def encode_body(self) -> bytes:
        return RecordWriter().raw(_pack_demand_id(self.demand_id)).done()

    @staticmethod
    def decode_body(reader: RecordReader, correlation_id: int) -> CoalescedMsg:
        return CoalescedMsg(_unpack_demand_id(reader.raw(16)), correlation_id)


@dataclass(frozen=True)
class NotReadyMsg:
    timed_out: bool = False
    correlation_id: int = 0
    kind: ClassVar[MessageKind] = MessageKind.NOT_READY

    def encode_body(self) -> bytes:
        return RecordWriter().u8(1 if self.timed_out else 0).done()

    @staticmethod
    def decode_body(reader: RecordReader, correlation_id: int) -> NotReadyMsg:
        return NotReadyMsg(reader.u8() == 1, correlation_id)


WireMessage = Union[
    DepositDemandMsg,
    WithdrawDemandMsg,
    DepositResultMsg,
    WithdrawResultMsg,
    RequeueExpiredMsg,
    StoreStatsMsg,
    AckMsg,
    ErrMsg,
    CachedMsg,
    CoalescedMsg,
    NotReadyMsg,
]

_DECODERS: dict[MessageKind, Callable[[RecordReader, int], WireMessage]] = {
    MessageKind.DEPOSIT_DEMAND: DepositDemandMsg.decode_body,
    MessageKind.WITHDRAW_DEMAND: WithdrawDemandMsg.decode_body,
    MessageKind.DEPOSIT_RESULT: DepositResultMsg.decode_body,
    MessageKind.WITHDRAW_RESULT: WithdrawResultMsg.decode_body,
    MessageKind.REQUEUE_EXPIRED: RequeueExpiredMsg.decode_body,
    MessageKind.STORE_STATS: StoreStatsMsg.decode_body,
    MessageKind.ACK: AckMsg.decode_body,
    MessageKind.ERR: ErrMsg.decode_body,
    MessageKind.CACHED: CachedMsg.decode_body,
    MessageKind.COALESCED: CoalescedMsg.decode_body,
    MessageKind.NOT_READY: NotReadyMsg.decode_body,
}

_KINDS_BY_CODE = {kind.value: kind for kind in MessageKind}


def with_correlation(message: WireMessage, correlation_id: int) -> WireMessage:
    return replace(message, correlation_id=correlation_id)


def encode_frame(message: WireMessage) -> bytes:
    body = message.encode_body()
    header = _HEADER.pack(
        MAGIC, PROTOCOL_VERSION, message.kind.value, message.correlation_id, len(body)
    )
    return header + body


def decode_frame(data: bytes) -> WireMessage:
    """Decode exactly one complete frame.

    Raises:
        TruncatedFrame: data ends before the declared body length.
        BadMagic, UnsupportedVersion, UnknownKind: header violations.
        ProtocolViolation: bytes left over after the frame.
    """
    message, consumed = _decode_prefix(data)
    if consumed != len(data):
        raise ProtocolViolation(
            f"{len(data) - consumed} trailing bytes after frame"
        )
    return message


def _decode_prefix(data: bytes) -> tuple[WireMessage, int]:
    if len(data) < 4:
        _check_magic_prefix(data)
        raise TruncatedFrame(f"need 4 header bytes, have {len(data)}")
    if data[:4] != MAGIC:
        raise BadMagic(f"bad magic {data[:4]!r}")
    if len(data) < HEADER_SIZE:
        raise TruncatedFrame(f"need {HEADER_SIZE} header bytes, have {len(data)}")
    _, version, kind_code, correlation_id, body_length = _HEADER.unpack_from(data)
    if version != PROTOCOL_VERSION:
        raise UnsupportedVersion(f"version {version:#04x} is not supported")
    kind = _KINDS_BY_CODE.get(kind_code)
    if kind is None:
        raise UnknownKind(f"unknown message kind {kind_code:#04x}")
    if body_length > MAX_BODY_SIZE:
        raise ProtocolViolation(f"declared body length {body_length} exceeds limit")
    end = HEADER_SIZE + body_length
    if len(data) < end:
        raise TruncatedFrame(
            f"body declares {body_length} bytes, {len(data) - HEADER_SIZE} present"
        )
    reader = RecordReader(data[HEADER_SIZE:end])
    try:
        message = _DECODERS[kind](reader, correlation_id)
        reader.expect_end()
    except RecordError as exc:
        raise ProtocolViolation(f"malformed {kind.name} body: {exc}") from exc
    return message, end


def _check_magic_prefix(data: bytes) -> None:
    # A short buffer can still be provably wrong if what we have already
    # disagrees with the magic.
    if data and data != MAGIC[: len(data)]:
        raise BadMagic(f"bad magic prefix {data!r}")


class FrameDecoder:
    """Incremental decoder for a byte stream carrying back-to-back frames.

    feed() buffers partial input and returns every complete message it can;
    header violations raise immediately, partial frames just wait for more
    bytes. One decoder per connection.
    """

    def __init__(self) -> None:
        self._buffer = bytearray()

    def feed(self, data: bytes) -> list[WireMessage]:
        self._buffer.extend(data)
        messages: list[WireMessage] = []
        while True:
            if len(self._buffer) < 4:
                _check_magic_prefix(bytes(self._buffer))
                return messages
            try:
                message, consumed = _decode_prefix(bytes(self._buffer))
            except TruncatedFrame:
                return messages
            messages.append(message)
            del self._buffer[:consumed]

    def pending_bytes(self) -> int:
        return len(self._buffer)
