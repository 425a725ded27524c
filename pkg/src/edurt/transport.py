"""Transport agents and the demand dispatcher.

Both agents speak to the same StoreService and both push every message
through the frame codec, so the in-process and TCP paths are
observationally equivalent by construction; the test suite verifies it
byte-for-byte. A dispatcher owns correlation ids and the retry policy and
is used by exactly one loop at a time.
"""

from __future__ import annotations

import json
import logging
import socket
import socketserver
import struct
import threading
import time
import uuid

from .demands import encode_demand
from .store import (
    Coalesced,
    DemandStore,
    Failed,
    Queued,
    Result,
    TimedOut,
    UnknownDemand,
    UnknownStage,
)
from .wire import (
    AckMsg,
    CachedMsg,
    CoalescedMsg,
    DepositDemandMsg,
    DepositResultMsg,
    ErrMsg,
    FrameDecoder,
    NotReadyMsg,
    ProtocolViolation,
    RequeueExpiredMsg,
    RESPONSE_KINDS,
    StoreStatsMsg,
    TransportError,
    WireMessage,
    WithdrawDemandMsg,
    WithdrawResultMsg,
    encode_frame,
    decode_frame,
    with_correlation,
)

__all__ = [
    "TransportDown",
    "StoreService",
    "TransportAgent",
    "InProcessAgent",
    "TcpAgent",
    "StoreServer",
    "TAExceptionHandler",
    "DemandDispatcher",
]

logger = logging.getLogger(__name__)

# Error codes carried by ErrMsg; documented in docs/protocol.md.
ERR_UNKNOWN_STAGE = "unknown-stage"
ERR_UNKNOWN_DEMAND = "unknown-demand"
ERR_DEMAND_FAILED = "demand-failed"
ERR_BAD_REQUEST = "bad-request"


class TransportDown(TransportError):
    """The endpoint could not be reached after the retry budget ran out."""


class StoreService:
    """Maps wire requests onto one DemandStore and back to wire responses."""

    def __init__(self, store: DemandStore) -> None:
        self.store = store

    def handle(self, request: WireMessage) -> WireMessage:
        corr = request.correlation_id
        try:
            if isinstance(request, DepositDemandMsg):
                return self._deposit(request, corr)
            if isinstance(request, WithdrawDemandMsg):
                return self._withdraw(request, corr)
            if isinstance(request, DepositResultMsg):
                return self._deposit_result(request, corr)
            if isinstance(request, WithdrawResultMsg):
                return self._withdraw_result(request, corr)
            if isinstance(request, RequeueExpiredMsg):
                requeued, failed = self.store.requeue_expired(request.now)
                return AckMsg(struct.pack(">II", requeued, failed), corr)
            if isinstance(request, StoreStatsMsg):
                stats = json.dumps(self.store.store_stats(), sort_keys=True)
                return AckMsg(stats.encode("utf-8"), corr)
            return ErrMsg(ERR_BAD_REQUEST, f"{type(request).__name__} is not a request", corr)
        except ValueError as exc:
            return ErrMsg(ERR_BAD_REQUEST, str(exc), corr)

    def _deposit(self, request: DepositDemandMsg, corr: int) -> WireMessage:
        try:
            outcome = self.store.deposit_demand(request.demand)
        except UnknownStage as exc:
            return ErrMsg(ERR_UNKNOWN_STAGE, str(exc), corr)
        if isinstance(outcome, Queued):
            return AckMsg(uuid.UUID(outcome.demand_id).bytes, corr)
        if isinstance(outcome, Coalesced):
            return CoalescedMsg(outcome.demand_id, corr)
        return CachedMsg(outcome.result, corr)

    def _withdraw(self, request: WithdrawDemandMsg, corr: int) -> WireMessage:
        stage_filter = set(request.stage_filter) if request.stage_filter is not None else None
        demand = self.store.withdraw_demand(request.workload_id, stage_filter)
        if demand is None:
            return NotReadyMsg(False, corr)
        return AckMsg(encode_demand(demand), corr)

    def _deposit_result(self, request: DepositResultMsg, corr: int) -> WireMessage:
        try:
            self.store.deposit_result(request.demand_id, request.result)
        except UnknownDemand as exc:
            return ErrMsg(ERR_UNKNOWN_DEMAND, str(exc), corr)
        return AckMsg(b"", corr)

    def _withdraw_result(self, request: WithdrawResultMsg, corr: int) -> WireMessage:
        outcome = self.store.withdraw_result(
            request.signature, wait=request.wait, timeout_ms=request.timeout_ms
        )
        if isinstance(outcome, Result):
            return AckMsg(outcome.result, corr)
        if isinstance(outcome, TimedOut):
            return NotReadyMsg(True, corr)
        if isinstance(outcome, Failed):
            return ErrMsg(ERR_DEMAND_FAILED, outcome.reason, corr)
        return NotReadyMsg(False, corr)


class TransportAgent:
    """One endpoint a loop can exchange request/response messages with."""

    def request(self, message: WireMessage) -> WireMessage:
        raise NotImplementedError

    def close(self) -> None:
        pass


class InProcessAgent(TransportAgent):
    """Direct agent for a store living in the same process.

    Messages still pass through the frame codec in both directions so this
    path exercises exactly the bytes the TCP path would.
    """

    def __init__(self, service: StoreService) -> None:
        self._service = service

    def request(self, message: WireMessage) -> WireMessage:
        delivered = decode_frame(encode_frame(message))
        response = self._service.handle(delivered)
        return decode_frame(encode_frame(response))


class TcpAgent(TransportAgent):
    """Blocking TCP agent; connects lazily, one request in flight at a time."""

    def __init__(self, address: tuple[str, int], connect_timeout: float = 5.0) -> None:
        self.address = address
        self._connect_timeout = connect_timeout
        self._sock: socket.socket | None = None
        self._decoder = FrameDecoder()

    def request(self, message: WireMessage) -> WireMessage:
        try:
            sock = self._ensure_connected()
            sock.settimeout(self._read_timeout(message))
            sock.sendall(encode_frame(message))
            while True:
                chunk = sock.recv(65536)
                if not chunk:
                    raise TransportDown(f"store at {self.address} closed the connection")
                messages = self._decoder.feed(chunk)
                if messages:
                    if len(messages) > 1:
                        raise ProtocolViolation("more than one response to one request")
                    return messages[0]
        except OSError as exc:
            self.close()
            raise TransportDown(f"store at {self.address} unreachable: {exc}") from exc
        except TransportError:
            # Protocol-level failures are not retryable; drop the connection
            # so the next request starts from a clean stream.
            self.close()
            raise

    def _ensure_connected(self) -> socket.socket:
        if self._sock is None:
            self._sock = socket.create_connection(
                self.address, timeout=self._connect_timeout
            )
            self._decoder = FrameDecoder()
        return self._sock

    def _read_timeout(self, message: WireMessage) -> float:
        # A waiting result withdrawal legitimately blocks server-side, so
        # the read deadline must exceed the requested wait.
        if isinstance(message, WithdrawResultMsg) and message.wait:
            return message.timeout_ms / 1000.0 + 10.0
        return 30.0

    def close(self) -> None:
        if self._sock is not None:
            try:
                self._sock.close()
            finally:
                self._sock = None


class _StoreConnectionHandler(socketserver.BaseRequestHandler):
    def handle(self) -> None:
        decoder = FrameDecoder()
        service: StoreService = self.server.service  # type: ignore[attr-defined]
        while True:
            try:
                chunk = self.request.recv(65536)
            except OSError:
                return
            if not chunk:
                return
            try:
                requests = decoder.feed(chunk)
            except TransportError as exc:
                logger.warning("closing connection after frame error: %s", exc)
                return
            for request in requests:
                response = service.handle(request)
                try:
                    self.request.sendall(encode_frame(response))
                except OSError:
                    return


class StoreServer:
    """TCP listener exposing one DemandStore through the wire protocol."""

    def __init__(self, store: DemandStore, address: tuple[str, int]) -> None:
        self.store = store
        self.service = StoreService(store)

        class _Server(socketserver.ThreadingTCPServer):
            allow_reuse_address = True
            daemon_threads = True

        self._server = _Server(address, _StoreConnectionHandler)
        self._server.service = self.service  # type: ignore[attr-defined]
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        host, port = self._server.server_address[:2]
        return (host, port)

    def start(self) -> None:
        if self._thread is not None:
            return
        self._thread = threading.Thread(
            target=self._server.serve_forever,
            kwargs={"poll_interval": 0.1},
            name=f"store-server-{self.address[1]}",
            daemon=True,
        )
        self._thread.start()

    def close(self) -> None:
        if self._thread is None:
            return
        self._server.shutdown()
        self._server.server_close()
        self._thread.join(timeout=5)
        self._thread = None


class TAExceptionHandler:
    """Retry policy for transport failures, with single-shot escalation.

    A fresh retry budget applies to every exchange, so any success resets
    the failure count. When the budget runs out the escalation sink is
    called exactly once and the final TransportDown propagates.
    """

    def __init__(
        self,
        max_retries: int = 3,
        backoff_ms: int = 50,
        multiplier: float = 2.0,
        escalation_sink=None,
        sleep=time.sleep,
    ) -> None:
        self.max_retries = max_retries
        self.backoff_ms = backoff_ms
        self.multiplier = multiplier
        self._escalation_sink = escalation_sink
        self._sleep = sleep

    def execute(self, attempt):
        delay_ms = float(self.backoff_ms)
        failures = 0
        while True:
            try:
                return attempt()
            except TransportDown as exc:
                failures += 1
                if failures > self.max_retries:
                    self._escalate(exc)
                    raise
                logger.debug(
                    "transport failure %d/%d, retrying in %.0f ms: %s",
                    failures,
                    self.max_retries,
                    delay_ms,
                    exc,
                )
                self._sleep(delay_ms / 1000.0)
                delay_ms *= self.multiplier

    def _escalate(self, exc: TransportDown) -> None:
        if self._escalation_sink is not None:
            try:
                self._escalation_sink(exc)
            except Exception:
                logger.exception("escalation sink raised")


class DemandDispatcher:
    """Sends requests through an agent, matching responses by correlation id."""

    def __init__(
        self, agent: TransportAgent, handler: TAExceptionHandler | None = None
    ) -> None:
        self._agent = agent
        self._handler = handler if handler is not None else TAExceptionHandler()
        self._next_correlation = 1
        self._lock = threading.Lock()

    def dispatch(self, message: WireMessage) -> WireMessage:
        with self._lock:
            correlation_id = self._next_correlation
            self._next_correlation += 1
        request = with_correlation(message, correlation_id)
        response = self._handler.execute(lambda: self._agent.request(request))
        if response.correlation_id != correlation_id:
            raise ProtocolViolation(
                f"response correlation {response.correlation_id} does not match "
                f"request {correlation_id}"
            )
        legal = RESPONSE_KINDS.get(request.kind)
        if legal is None or response.kind not in legal:
            raise ProtocolViolation(
                f"{response.kind.name} is not a legal response to {request.kind.name}"
            )
        return response

    def close(self) -> None:
        self._agent.close()
