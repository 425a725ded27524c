"""HTTP management surface served by the GMT node.

One JSON API under /v1 carries everything an operator (or the web
console, or the CLI) does to a running network: inspect nodes and tier
counts, add and remove tier instances, page through demands, read store
counters, submit jobs and poll their status, and move store snapshots in
and out. The same server also speaks the registration and command
protocol that member nodes use, so a single listen address serves both
audiences.

Every mutating endpoint validates its entire request before touching the
registry or the store; any 4xx answer therefore implies nothing changed.
Tier operations aimed at other nodes are forwarded through the per-node
command queue and answered with the executing node's reported result.
"""

from __future__ import annotations

import json
import logging
import sys
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, unquote, urlsplit

from .backup import CorruptSnapshot
from .demands import DemandState
from .jobs import BadInput, JobManager, UnknownJob, UnknownWorkload, ValidationError
from .node import (
    DYNAMIC_TIERS,
    DuplicateNodeId,
    GipsyNode,
    NoController,
    NodeError,
    NothingToRemove,
    PortInUse,
    TierIdentity,
    UnknownNode,
    add_tier,
    remove_tier,
)
from .store import StoreError

__all__ = ["ManagementServer"]

logger = logging.getLogger(__name__)

_MAX_BODY = 256 * 1024 * 1024
_MAX_WAIT_MS = 30_000
_DEFAULT_PAGE = 50
_MAX_PAGE = 500

# Which bootstrap properties matter for a node hosting each tier kind,
# mirroring the role checks the config parser enforces.
_SCHEMA = {
    "GMT": {
        "required": ("node.id", "manage.listen", "dst.listen"),
        "optional": ("tiers.initial", "lease.ms", "attempts.max",
                     "workload.file", "worker.stages"),
    },
    "DST": {
        "required": ("node.id", "gmt.address", "dst.listen"),
        "optional": ("tiers.initial", "lease.ms", "attempts.max"),
    },
    "DGT": {
        "required": ("node.id", "gmt.address", "workload.file"),
        "optional": ("tiers.initial",),
    },
    "DWT": {
        "required": ("node.id", "gmt.address", "workload.file"),
        "optional": ("tiers.initial", "worker.stages"),
    },
}

# Result names a forwarded command can come back with, and how they map
# onto a response. Anything else is treated as an internal failure.
_REMOTE_RESULTS = {
    "NothingToRemove": (409, "nothing-to-remove"),
    "NoController": (422, "no-controller"),
    "PortInUse": (409, "port-in-use"),
    "bad-command": (400, "bad-request"),
}


class _ApiError(Exception):
    """A response the handler has already decided on."""

    def __init__(self, status: int, code: str, message: str) -> None:
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


def _domain_status(exc: Exception) -> tuple[int, str] | None:
    """HTTP mapping for exceptions raised by the layers below."""
    if isinstance(exc, UnknownNode):
        return 404, "unknown-node"
    if isinstance(exc, UnknownJob):
        return 404, "unknown-job"
    if isinstance(exc, UnknownWorkload):
        return 404, "unknown-workload"
    if isinstance(exc, NothingToRemove):
        return 409, "nothing-to-remove"
    if isinstance(exc, DuplicateNodeId):
        return 409, "duplicate-node"
    if isinstance(exc, PortInUse):
        return 409, "port-in-use"
    if isinstance(exc, StoreError):
        return 409, "store-busy"
    if isinstance(exc, NoController):
        return 422, "no-controller"
    if isinstance(exc, ValidationError):
        return 422, "validation"
    if isinstance(exc, CorruptSnapshot):
        return 422, "corrupt-snapshot"
    if isinstance(exc, BadInput):
        return 400, "bad-input"
    return None


def _demand_view(demand) -> dict:
    return {
        "id": demand.id,
        "signature": demand.signature.hex(),
        "workload": demand.signature.workload_id,
        "stage": demand.signature.stage_id,
        "state": demand.state.value,
        "attempts": demand.attempts,
        "content_kind": demand.content_kind,
        "payload_size": len(demand.payload),
    }


def _api_node_view(raw: dict, manage_address: tuple[str, int] | None) -> dict:
    counts = raw["tiers"]
    address = None
    if raw["gmt"] and manage_address is not None:
        address = f"{manage_address[0]}:{manage_address[1]}"
    return {
        "node_id": raw["node_id"],
        "gmt": raw["gmt"],
        "address": address,
        "registered_at": raw["registered_at"],
        "tiers": [
            {
                "identity": name,
                "count": counts.get(name, 0),
                "state": "running" if counts.get(name, 0) else "empty",
            }
            for name in DYNAMIC_TIERS
        ],
    }


class _ManageHTTPServer(ThreadingHTTPServer):
    daemon_threads = True
    allow_reuse_address = True

    node: GipsyNode
    jobs: JobManager
    command_timeout: float

    def handle_error(self, request, client_address) -> None:
        # Keep-alive clients (browsers, pollers) reset idle connections
        # on exit; that is not worth a traceback in the node log.
        exc = sys.exc_info()[1]
        if isinstance(exc, (ConnectionResetError, BrokenPipeError)):
            logger.debug("client %s dropped the connection", client_address)
            return
        super().handle_error(request, client_address)


class _ManageHandler(BaseHTTPRequestHandler):
    server_version = "edurt-manage/1"
    protocol_version = "HTTP/1.1"
    server: _ManageHTTPServer

    # -- plumbing ---------------------------------------------------------

    def log_message(self, format: str, *args) -> None:
        logger.debug("%s %s", self.address_string(), format % args)

    def do_GET(self) -> None:
        self._dispatch("GET")

    def do_POST(self) -> None:
        self._dispatch("POST")

    def do_DELETE(self) -> None:
        self._dispatch("DELETE")

    def do_OPTIONS(self) -> None:
        self.send_response(204)
        self._cors()
        self.send_header("Content-Length", "0")
        self.end_headers()

    def _dispatch(self, method: str) -> None:
        try:
            parsed = urlsplit(self.path)
            parts = [unquote(part) for part in parsed.path.split("/") if part]
            query = parse_qs(parsed.query)
            self._route(method, parts, query)
        except _ApiError as exc:
            self._send_error(exc.status, exc.code, exc.message)
        except (BrokenPipeError, ConnectionResetError):
            pass
        except Exception as exc:
            mapped = _domain_status(exc)
            if mapped is not None:
                self._send_error(mapped[0], mapped[1], str(exc))
            else:
                logger.exception("unhandled management request failure")
                self._send_error(500, "internal", str(exc))

    def _cors(self) -> None:
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, DELETE, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")

    def _send_json(self, status: int, document: dict) -> None:
        data = json.dumps(document).encode("utf-8")
        self.send_response(status)
        self._cors()
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def _send_bytes(self, status: int, data: bytes, content_type: str) -> None:
        self.send_response(status)
        self._cors()
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def _send_error(self, status: int, code: str, message: str) -> None:
        try:
            self._send_json(status, {"error": message, "code": code})
        except (BrokenPipeError, ConnectionResetError, OSError):
            pass

    def _read_raw(self) -> bytes:
        try:
            length = int(self.headers.get("Content-Length") or 0)
        except ValueError:
            raise _ApiError(400, "bad-request", "unreadable Content-Length")
        if length < 0 or length > _MAX_BODY:
            raise _ApiError(413, "too-large", f"body of {length} bytes refused")
        return self.rfile.read(length)

    def _read_json(self) -> dict:
        raw = self._read_raw()
        if not raw:
            raise _ApiError(400, "bad-request", "request body must be a JSON object")
        try:
            document = json.loads(raw)
        except ValueError:
            raise _ApiError(400, "bad-request", "request body is not valid JSON")
        if not isinstance(document, dict):
            raise _ApiError(400, "bad-request", "request body must be a JSON object")
        return document

    def _query_value(self, query: dict, name: str) -> str | None:
        values = query.get(name)
        return values[-1] if values else None

    def _query_int(self, query: dict, name: str, default: int,
                   minimum: int, maximum: int) -> int:
        text = self._query_value(query, name)
        if text is None:
            return default
        try:
            value = int(text)
        except ValueError:
            raise _ApiError(400, "bad-request", f"{name} must be an integer")
        if not minimum <= value <= maximum:
            raise _ApiError(
                400, "bad-request",
                f"{name} must be between {minimum} and {maximum}",
            )
        return value

    # -- routing ----------------------------------------------------------

    def _route(self, method: str, parts: list[str], query: dict) -> None:
        if not parts or parts[0] != "v1":
            raise _ApiError(404, "not-found", f"unknown path {self.path!r}")
        rest = parts[1:]
        n = len(rest)
        if rest == ["nodes"]:
            if method == "GET":
                return self._get_nodes()
            if method == "POST":
                return self._register_node()
        elif n == 2 and rest[0] == "nodes":
            if method == "GET":
                return self._get_node(rest[1])
        elif n == 3 and rest[0] == "nodes" and rest[2] == "tiers":
            if method == "POST":
                return self._add_tier(rest[1])
        elif n == 4 and rest[0] == "nodes" and rest[2] == "tiers":
            if method == "DELETE":
                return self._remove_tier(rest[1], rest[3])
        elif n == 3 and rest[0] == "nodes" and rest[2] == "counts":
            if method == "POST":
                return self._post_counts(rest[1])
        elif n == 3 and rest[0] == "nodes" and rest[2] == "commands":
            if method == "GET":
                return self._poll_commands(rest[1], query)
        elif (n == 5 and rest[0] == "nodes" and rest[2] == "commands"
              and rest[4] == "result"):
            if method == "POST":
                return self._post_command_result(rest[3])
        elif rest == ["store", "stats"]:
            if method == "GET":
                return self._get_stats()
        elif rest == ["store", "backup"]:
            if method == "GET":
                return self._get_backup()
        elif rest == ["store", "restore"]:
            if method == "POST":
                return self._post_restore()
        elif rest == ["demands"]:
            if method == "GET":
                return self._get_demands(query)
        elif rest == ["jobs"]:
            if method == "GET":
                return self._get_jobs()
            if method == "POST":
                return self._post_job()
        elif n == 2 and rest[0] == "jobs":
            if method == "GET":
                return self._get_job(rest[1])
        elif n == 2 and rest[0] == "schema":
            if method == "GET":
                return self._get_schema(rest[1])
        else:
            raise _ApiError(404, "not-found", f"unknown path {self.path!r}")
        raise _ApiError(
            405, "method-not-allowed", f"{method} not supported here"
        )

    # -- topology ---------------------------------------------------------

    def _get_nodes(self) -> None:
        manage_address = self.server.server_address[:2]
        views = [
            _api_node_view(raw, manage_address)
            for raw in self.server.node.registry.nodes()
        ]
        self._send_json(200, {"nodes": views})

    def _get_node(self, node_id: str) -> None:
        raw = self.server.node.registry.node(node_id)
        self._send_json(
            200, _api_node_view(raw, self.server.server_address[:2])
        )

    def _parse_identity(self, text) -> TierIdentity:
        try:
            return TierIdentity(text)
        except ValueError:
            names = ", ".join(identity.value for identity in TierIdentity)
            raise _ApiError(
                422, "validation", f"identity must be one of {names}"
            ) from None

    def _tier_op(self, node_id: str, op: str, identity: TierIdentity) -> str:
        """Run or forward one add/remove; returns the instance id."""
        node = self.server.node
        registry = node.registry
        registry.node(node_id)
        if node_id == node.node_id:
            if op == "add_tier":
                return add_tier(node, identity)
            return remove_tier(node, identity)
        if identity is TierIdentity.GMT:
            # Same rejection the executing node's dispatch would produce,
            # decided here so nothing is enqueued.
            raise NoController(identity)
        command_id = registry.enqueue_command(node_id, op, identity.value)
        result = registry.wait_for_result(
            command_id, self.server.command_timeout
        )
        if result is None:
            raise _ApiError(
                504, "node-timeout",
                f"node {node_id!r} did not answer within "
                f"{self.server.command_timeout:g}s",
            )
        if result.get("ok"):
            return str(result.get("instance_id", ""))
        name = str(result.get("error", ""))
        status, code = _REMOTE_RESULTS.get(name, (500, "internal"))
        raise _ApiError(status, code, str(result.get("message", name)))

    def _add_tier(self, node_id: str) -> None:
        body = self._read_json()
        identity = self._parse_identity(body.get("identity"))
        instance_id = self._tier_op(node_id, "add_tier", identity)
        self._send_json(201, {
            "node_id": node_id,
            "identity": identity.value,
            "instance_id": instance_id,
        })

    def _remove_tier(self, node_id: str, identity_text: str) -> None:
        identity = self._parse_identity(identity_text)
        instance_id = self._tier_op(node_id, "remove_tier", identity)
        self._send_json(200, {
            "node_id": node_id,
            "identity": identity.value,
            "instance_id": instance_id,
            "removed": True,
        })

    # -- registration and command forwarding (member node protocol) -------

    def _register_node(self) -> None:
        body = self._read_json()
        node_id = body.get("node_id")
        if not isinstance(node_id, str) or not node_id:
            raise _ApiError(400, "bad-request", "node_id must be a non-empty string")
        info = self.server.node.registry.register(node_id)
        self._send_json(200, info)

    def _post_counts(self, node_id: str) -> None:
        body = self._read_json()
        tiers = body.get("tiers")
        if not isinstance(tiers, dict):
            raise _ApiError(400, "bad-request", "tiers must be an object of counts")
        self.server.node.registry.update_counts(node_id, tiers)
        self._send_json(200, {})

    def _poll_commands(self, node_id: str, query: dict) -> None:
        wait_ms = self._query_int(query, "wait_ms", 0, 0, _MAX_WAIT_MS)
        commands = self.server.node.registry.poll_commands(
            node_id, wait_ms / 1000.0
        )
        self._send_json(200, {"commands": commands})

    def _post_command_result(self, command_id: str) -> None:
        body = self._read_json()
        self.server.node.registry.complete_command(command_id, body)
        self._send_json(200, {})

    # -- store ------------------------------------------------------------

    def _get_stats(self) -> None:
        self._send_json(200, self.server.node.ensure_store().store_stats())

    def _get_demands(self, query: dict) -> None:
        state = None
        state_text = self._query_value(query, "state")
        if state_text is not None:
            try:
                state = DemandState(state_text)
            except ValueError:
                labels = ", ".join(s.value for s in DemandState)
                raise _ApiError(
                    400, "bad-request", f"state must be one of {labels}"
                ) from None
        stage = self._query_value(query, "stage")
        cursor = self._query_int(query, "cursor", 0, 0, 2**31)
        limit = self._query_int(query, "limit", _DEFAULT_PAGE, 1, _MAX_PAGE)
        page, next_cursor = self.server.node.ensure_store().list_demands(
            state=state, stage=stage, cursor=cursor, limit=limit
        )
        self._send_json(200, {
            "demands": [_demand_view(demand) for demand in page],
            "next_cursor": next_cursor,
        })

    def _get_backup(self) -> None:
        self._send_bytes(
            200, self.server.node.snapshot_bytes(), "application/octet-stream"
        )

    def _post_restore(self) -> None:
        counts = self.server.node.restore_bytes(self._read_raw())
        self._send_json(200, counts)

    # -- jobs -------------------------------------------------------------

    def _post_job(self) -> None:
        job_id = self.server.jobs.submit(self._read_json())
        self._send_json(201, {"job_id": job_id})

    def _get_jobs(self) -> None:
        self._send_json(200, {"jobs": self.server.jobs.jobs_view()})

    def _get_job(self, job_id: str) -> None:
        self._send_json(200, self.server.jobs.job_view(job_id))

    # -- schema -----------------------------------------------------------

    def _get_schema(self, tier: str) -> None:
        entry = _SCHEMA.get(tier)
        if entry is None:
            raise _ApiError(404, "not-found", f"no tier named {tier!r}")
        keys = [
            {"key": key, "required": True} for key in entry["required"]
        ] + [
            {"key": key, "required": False} for key in entry["optional"]
        ]
        self._send_json(200, {
            "tier": tier,
            "addable": tier in DYNAMIC_TIERS,
            "keys": keys,
        })


class ManagementServer:
    """Lifecycle wrapper around the HTTP listener.

    Raises:
        NodeError: the hosting node does not carry the registry.
        PortInUse: the listen address cannot be bound.
    """

    def __init__(
        self,
        node: GipsyNode,
        address: tuple[str, int],
        *,
        command_timeout: float = 15.0,
    ) -> None:
        if not node.is_gmt:
            raise NodeError("the management API runs on the GMT node only")
        try:
            self._httpd = _ManageHTTPServer(tuple(address), _ManageHandler)
        except OSError as exc:
            raise PortInUse(tuple(address), str(exc)) from None
        self._httpd.node = node
        self._httpd.jobs = JobManager(node)
        self._httpd.command_timeout = command_timeout
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        host, port = self._httpd.server_address[:2]
        return host, port

    @property
    def base_url(self) -> str:
        host, port = self.address
        return f"http://{host}:{port}"

    @property
    def jobs(self) -> JobManager:
        return self._httpd.jobs

    def start(self) -> None:
        if self._thread is not None:
            return
        self._thread = threading.Thread(
            target=self._httpd.serve_forever,
            kwargs={"poll_interval": 0.1},
            name="manage-api",
            daemon=True,
        )
        self._thread.start()

    def close(self) -> None:
        if self._thread is not None:
            self._httpd.shutdown()
        self._httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=10)
            self._thread = None
