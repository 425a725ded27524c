"""Node bootstrap, tier controllers, and the GMT node registry.

A node hosts up to three dynamic tier controllers (DST, DGT, DWT), each
owning a list of running tier instances. The GMT role is decided at
bootstrap from the configuration and cannot be added or removed at run
time; a GMT node additionally owns the registry of every node in the
instance and always allocates a registration demand store locally, whose
address is handed to registering nodes as the workload store.

Cross-node control flow (registration, count reports, tier commands)
rides on the management HTTP API; this module contains only the client
side, so it stays import-free of the HTTP server.
"""

from __future__ import annotations

import itertools
import json
import logging
import threading
import time
import urllib.error
import urllib.parse
import urllib.request
import uuid
from dataclasses import dataclass
from enum import Enum

from .backup import Snapshot, decode_snapshot, encode_snapshot
from .config import NodeConfiguration
from .errors import EdurtError
from .generator import JobHandle, run_generator
from .pipeline.executors import dmarf_workload, pipeline_executors
from .store import DemandStore
from .transport import DemandDispatcher, StoreServer, TcpAgent
from .worker import WorkerLoop
from .workload import WorkloadDefinition, load_workload

__all__ = [
    "TierIdentity",
    "NodeError",
    "NoController",
    "NothingToRemove",
    "PortInUse",
    "GmtUnreachable",
    "DuplicateNodeId",
    "UnknownNode",
    "GmtRegistry",
    "LocalRegistrar",
    "HttpRegistrar",
    "NodeController",
    "DstController",
    "DgtController",
    "DwtController",
    "GeneratorHost",
    "GipsyNode",
    "bootstrap",
    "controller_by_tier_identity",
    "add_tier",
    "remove_tier",
]

logger = logging.getLogger(__name__)

# Identities a controller can exist for; GMT is never among them.
DYNAMIC_TIERS = ("DST", "DGT", "DWT")


class TierIdentity(Enum):
    DGT = "DGT"
    DWT = "DWT"
    DST = "DST"
    GMT = "GMT"


class NodeError(EdurtError):
    pass


class NoController(NodeError):
    """The identity has no dynamic controller (only GMT qualifies)."""

    def __init__(self, identity: TierIdentity) -> None:
        super().__init__(f"no controller for tier identity {identity.value}")
        self.identity = identity


class NothingToRemove(NodeError):
    def __init__(self, identity: TierIdentity) -> None:
        super().__init__(f"no {identity.value} instance to remove")
        self.identity = identity


class PortInUse(NodeError):
    def __init__(self, address: tuple[str, int], cause: str) -> None:
        super().__init__(f"cannot bind {address[0]}:{address[1]}: {cause}")
        self.address = address


class GmtUnreachable(NodeError):
    def __init__(self, target: str, cause: str) -> None:
        super().__init__(f"GMT at {target} unreachable: {cause}")
        self.target = target


class DuplicateNodeId(NodeError):
    def __init__(self, node_id: str) -> None:
        super().__init__(f"a node named {node_id!r} is already registered")
        self.node_id = node_id


class UnknownNode(NodeError):
    def __init__(self, node_id: str) -> None:
        super().__init__(f"no registered node named {node_id!r}")
        self.node_id = node_id


# -- GMT registry ---------------------------------------------------------


@dataclass
class _NodeEntry:
    node_id: str
    gmt: bool
    registered_at: float
    tiers: dict[str, int]
    commands: list[dict]


class GmtRegistry:
    """The GMT's authoritative table of registered nodes.

    Also carries the per-node command queues that let the GMT forward
    tier add/remove requests to the node that must execute them, and the
    result slots their long-polling executors report back into.
    """

    def __init__(self, instance_info: dict[str, str] | None = None) -> None:
        self._lock = threading.Lock()
        self._changed = threading.Condition(self._lock)
        self._nodes: dict[str, _NodeEntry] = {}
        self._results: dict[str, dict] = {}
        self._instance_info = dict(instance_info) if instance_info else {}

    def set_instance_info(self, info: dict[str, str]) -> None:
        with self._lock:
            self._instance_info = dict(info)

    def register(self, node_id: str, gmt: bool = False) -> dict:
        """Admit a node; returns the instance info (store address et al)."""
        if not node_id:
            raise ValueError("node_id must be non-empty")
        with self._lock:
            if node_id in self._nodes:
                raise DuplicateNodeId(node_id)
            self._nodes[node_id] = _NodeEntry(
                node_id=node_id,
                gmt=gmt,
                registered_at=time.time(),
                tiers={name: 0 for name in DYNAMIC_TIERS},
                commands=[],
            )
            return dict(self._instance_info)

    def update_counts(self, node_id: str, tiers: dict[str, int]) -> None:
        with self._lock:
            entry = self._nodes.get(node_id)
            if entry is None:
                raise UnknownNode(node_id)
            for name in DYNAMIC_TIERS:
                if name in tiers:
                    entry.tiers[name] = int(tiers[name])

    def nodes(self) -> list[dict]:
        with self._lock:
            return [self._view(entry) for entry in self._nodes.values()]

    def node(self, node_id: str) -> dict:
        with self._lock:
            entry = self._nodes.get(node_id)
            if entry is None:
                raise UnknownNode(node_id)
            return self._view(entry)

    @staticmethod
    def _view(entry: _NodeEntry) -> dict:
        return {
            "node_id": entry.node_id,
            "gmt": entry.gmt,
            "registered_at": entry.registered_at,
            "tiers": dict(entry.tiers),
        }

    # -- command forwarding ----------------------------------------------

    def enqueue_command(self, node_id: str, op: str, identity: str) -> str:
        command_id = str(uuid.uuid4())
        with self._lock:
            entry = self._nodes.get(node_id)
            if entry is None:
                raise UnknownNode(node_id)
            entry.commands.append(
                {"command_id": command_id, "op": op, "identity": identity}
            )
            self._changed.notify_all()
        return command_id

    def poll_commands(self, node_id: str, timeout: float) -> list[dict]:
        """Drain the node's queue, waiting up to timeout for the first entry."""
        deadline = time.monotonic() + timeout
        with self._lock:
            entry = self._nodes.get(node_id)
            if entry is None:
                raise UnknownNode(node_id)
            while not entry.commands:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    return []
                self._changed.wait(remaining)
            drained = list(entry.commands)
            entry.commands.clear()
            return drained

    def complete_command(self, command_id: str, result: dict) -> None:
        with self._lock:
            self._results[command_id] = dict(result)
            self._changed.notify_all()

    def wait_for_result(self, command_id: str, timeout: float) -> dict | None:
        deadline = time.monotonic() + timeout
        with self._lock:
            while command_id not in self._results:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    return None
                self._changed.wait(remaining)
            return self._results.pop(command_id)


# -- registrar seam -------------------------------------------------------


class LocalRegistrar:
    """Registrar for the node that owns the registry (the GMT itself)."""

    def __init__(self, registry: GmtRegistry) -> None:
        self._registry = registry

    def register(self, node_id: str) -> dict:
        return self._registry.register(node_id)

    def report_counts(self, node_id: str, tiers: dict[str, int]) -> None:
        self._registry.update_counts(node_id, tiers)

    def poll_commands(self, node_id: str, timeout: float) -> list[dict]:
        return self._registry.poll_commands(node_id, timeout)

    def complete_command(self, node_id: str, command_id: str, result: dict) -> None:
        self._registry.complete_command(command_id, result)

    def close(self) -> None:
        pass


class HttpRegistrar:
    """Registrar client speaking to a remote GMT's management API."""

    def __init__(self, base_url: str, timeout: float = 10.0) -> None:
        self.base_url = base_url.rstrip("/")
        self._timeout = timeout

    def _call(self, method: str, path: str, body: dict | None = None,
              timeout: float | None = None) -> dict:
        url = self.base_url + path
        data = json.dumps(body).encode("utf-8") if body is not None else None
        request = urllib.request.Request(
            url, data=data, method=method,
            headers={"Content-Type": "application/json"},
        )
        try:
            with urllib.request.urlopen(
                request, timeout=timeout if timeout is not None else self._timeout
            ) as response:
                raw = response.read()
        except urllib.error.HTTPError as exc:
            detail = exc.read().decode("utf-8", "replace")
            raise _registrar_error(exc.code, detail, url) from None
        except urllib.error.URLError as exc:
            raise GmtUnreachable(self.base_url, str(exc.reason)) from None
        except OSError as exc:
            raise GmtUnreachable(self.base_url, str(exc)) from None
        return json.loads(raw) if raw else {}

    def register(self, node_id: str) -> dict:
        return self._call("POST", "/v1/nodes", {"node_id": node_id})

    def report_counts(self, node_id: str, tiers: dict[str, int]) -> None:
        self._call(
            "POST", f"/v1/nodes/{urllib.parse.quote(node_id)}/counts",
            {"tiers": tiers},
        )

    def poll_commands(self, node_id: str, timeout: float) -> list[dict]:
        wait_ms = max(0, int(timeout * 1000))
        document = self._call(
            "GET",
            f"/v1/nodes/{urllib.parse.quote(node_id)}/commands?wait_ms={wait_ms}",
            timeout=timeout + self._timeout,
        )
        return document.get("commands", [])

    def complete_command(self, node_id: str, command_id: str, result: dict) -> None:
        self._call(
            "POST",
            f"/v1/nodes/{urllib.parse.quote(node_id)}/commands/"
            f"{urllib.parse.quote(command_id)}/result",
            result,
        )

    def close(self) -> None:
        pass


def _registrar_error(status: int, detail: str, url: str) -> NodeError:
    try:
        message = json.loads(detail).get("error", detail)
    except (json.JSONDecodeError, AttributeError):
        message = detail
    if status == 409 and "registered" in message:
        # The only 409 the registration path produces.
        return DuplicateNodeId(message.split("'")[1] if "'" in message else message)
    return NodeError(f"GMT rejected {url}: {status} {message}")


# -- controllers ----------------------------------------------------------


class NodeController:
    """Owns the running instances of one tier identity on one node."""

    def __init__(self, node: GipsyNode, identity: TierIdentity) -> None:
        self._node = node
        self.identity = identity
        self._instances: dict[str, object] = {}
        self._seq = itertools.count(1)

    @property
    def count(self) -> int:
        return len(self._instances)

    def instance_ids(self) -> tuple[str, ...]:
        return tuple(self._instances)

    def add_tier(self) -> str:
        with self._node._lock:
            instance_id = f"{self.identity.value.lower()}-{next(self._seq)}"
            instance = self._start_instance(instance_id)
            self._instances[instance_id] = instance
        self._node._report_counts()
        return instance_id

    def remove_tier(self) -> str:
        with self._node._lock:
            if not self._instances:
                raise NothingToRemove(self.identity)
            # Last in, first out.
            instance_id, instance = self._instances.popitem()
        self._stop_instance(instance)
        self._node._report_counts()
        return instance_id

    def stop_all(self) -> None:
        with self._node._lock:
            instances = list(self._instances.values())
            self._instances.clear()
        for instance in instances:
            try:
                self._stop_instance(instance)
            except Exception:
                logger.exception("stopping %s instance failed", self.identity.value)

    def _start_instance(self, instance_id: str):
        raise NotImplementedError

    def _stop_instance(self, instance) -> None:
        raise NotImplementedError


class DstController(NodeController):
    """Store tier: TCP listeners sharing this node's demand store.

    The first instance binds the configured dst.listen address; further
    instances take ephemeral ports on the same host. All instances serve
    the same store, so adding listeners scales connections, not state.
    """

    def __init__(self, node: GipsyNode) -> None:
        super().__init__(node, TierIdentity.DST)

    def _start_instance(self, instance_id: str) -> StoreServer:
        store = self._node.ensure_store()
        configured = self._node.config.dst_listen
        if configured is not None and not self._instances:
            address = configured
        else:
            host = configured[0] if configured is not None else "127.0.0.1"
            address = (host, 0)
        try:
            server = StoreServer(store, address)
        except OSError as exc:
            raise PortInUse(address, str(exc)) from exc
        server.start()
        if self._node.store_address is None:
            self._node.store_address = server.address
        return server

    def _stop_instance(self, instance: StoreServer) -> None:
        was_advertised = instance.address == self._node.store_address
        instance.close()
        if was_advertised:
            remaining = list(self._instances.values())
            self._node.store_address = (
                remaining[0].address if remaining else None
            )


class GeneratorHost:
    """One DGT instance: submits jobs against the workload store.

    Every job runs on its own dispatcher and connection; the host only
    carries the shared stop flag that bounds shutdown.
    """

    def __init__(
        self, address: tuple[str, int], workload: WorkloadDefinition, name: str
    ) -> None:
        self.name = name
        self._address = address
        self._workload = workload
        self._stop = threading.Event()
        self._jobs: list[JobHandle] = []
        self._lock = threading.Lock()

    def submit(
        self,
        payload: bytes,
        *,
        workload: WorkloadDefinition | None = None,
        job_id: str | None = None,
        content_kind: str = "application/octet-stream",
        progress=None,
    ) -> JobHandle:
        if self._stop.is_set():
            raise NodeError(f"generator {self.name} is stopped")
        dispatcher = DemandDispatcher(TcpAgent(self._address))
        handle = run_generator(
            dispatcher,
            workload if workload is not None else self._workload,
            payload,
            job_id=job_id,
            content_kind=content_kind,
            stop_event=self._stop,
            owns_dispatcher=True,
            progress=progress,
        )
        with self._lock:
            self._jobs = [job for job in self._jobs if not job.is_done()]
            self._jobs.append(handle)
        return handle

    @property
    def active_jobs(self) -> int:
        with self._lock:
            return sum(1 for job in self._jobs if not job.is_done())

    def close(self) -> None:
        self._stop.set()


class DgtController(NodeController):
    """Generator tier: job-driving loops against the workload store."""

    def __init__(self, node: GipsyNode) -> None:
        super().__init__(node, TierIdentity.DGT)

    def _start_instance(self, instance_id: str) -> GeneratorHost:
        address = self._node.require_store_address()
        return GeneratorHost(address, self._node.workload, instance_id)

    def _stop_instance(self, instance: GeneratorHost) -> None:
        instance.close()

    def any_host(self) -> GeneratorHost:
        with self._node._lock:
            for host in self._instances.values():
                return host
        raise NodeError("no generator tier is running on this node")


class DwtController(NodeController):
    """Worker tier: withdraw/execute/deposit loops."""

    def __init__(self, node: GipsyNode) -> None:
        super().__init__(node, TierIdentity.DWT)

    def _start_instance(self, instance_id: str) -> WorkerLoop:
        node = self._node
        address = node.require_store_address()
        stage_filter = node.config.worker_stages or None
        loop = WorkerLoop(
            DemandDispatcher(TcpAgent(address)),
            node.workload,
            node.executors,
            stage_filter=stage_filter,
            fault_hook=node.worker_fault_hook,
            name=f"{node.node_id}/{instance_id}",
        )
        loop.start_worker()
        return loop

    def _stop_instance(self, instance: WorkerLoop) -> None:
        instance.stop_worker()


# -- the node -------------------------------------------------------------


class GipsyNode:
    """One process's tiers, plus (on the GMT) the instance registry."""

    def __init__(
        self,
        config: NodeConfiguration,
        *,
        registry: GmtRegistry | None = None,
        workload: WorkloadDefinition | None = None,
        executors: dict | None = None,
    ) -> None:
        self.config = config
        self.node_id = config.node_id
        self.registry = registry
        self.registrar = None
        self.workload = workload if workload is not None else dmarf_workload()
        self.executors = executors if executors is not None else pipeline_executors()
        self.store: DemandStore | None = None
        self.store_address: tuple[str, int] | None = None
        self.training_sets: dict[str, bytes] = {}
        # Test seam, passed through to every worker loop this node starts.
        self.worker_fault_hook = None
        self.manage_server = None
        self._lock = threading.RLock()
        self._closed = threading.Event()
        self._command_thread: threading.Thread | None = None
        self.controllers: dict[TierIdentity, NodeController] = {
            TierIdentity.DST: DstController(self),
            TierIdentity.DGT: DgtController(self),
            TierIdentity.DWT: DwtController(self),
        }

    @property
    def is_gmt(self) -> bool:
        return self.registry is not None

    def ensure_store(self) -> DemandStore:
        """This node's demand store, created on first use.

        The built-in workload and the configured one are registered on
        creation so deposits are accepted as soon as a listener is up.
        """
        with self._lock:
            if self.store is None:
                self.store = DemandStore(
                    lease_ms=self.config.lease_ms,
                    max_attempts=self.config.max_attempts,
                )
                built_in = dmarf_workload()
                self.store.register_workload(
                    built_in.workload_id, built_in.stage_ids()
                )
                self.store.register_workload(
                    self.workload.workload_id, self.workload.stage_ids()
                )
                self.store.start_sweeper()
            return self.store

    def require_store_address(self) -> tuple[str, int]:
        address = self.store_address
        if address is None:
            raise NodeError(
                "no demand store address known; bootstrap with a GMT or "
                "start a DST first"
            )
        return address

    def tier_counts(self) -> dict[str, int]:
        with self._lock:
            return {
                identity.value: controller.count
                for identity, controller in self.controllers.items()
            }

    def _report_counts(self) -> None:
        if self.registrar is None:
            return
        try:
            self.registrar.report_counts(self.node_id, self.tier_counts())
        except Exception:
            logger.exception("count report to GMT failed")

    # -- command execution (non-GMT nodes) -------------------------------

    def start_command_poller(self, poll_timeout: float = 5.0) -> None:
        if self._command_thread is not None:
            return

        def poll() -> None:
            while not self._closed.is_set():
                try:
                    commands = self.registrar.poll_commands(
                        self.node_id, poll_timeout
                    )
                except Exception:
                    if self._closed.is_set():
                        return
                    logger.warning("command poll failed; retrying", exc_info=True)
                    self._closed.wait(1.0)
                    continue
                for command in commands:
                    self._execute_command(command)

        self._command_thread = threading.Thread(
            target=poll, name=f"{self.node_id}-commands", daemon=True
        )
        self._command_thread.start()

    def _execute_command(self, command: dict) -> None:
        command_id = command.get("command_id", "")
        try:
            identity = TierIdentity(command.get("identity"))
            op = command.get("op")
            if op == "add_tier":
                instance_id = add_tier(self, identity)
                result = {"ok": True, "instance_id": instance_id}
            elif op == "remove_tier":
                instance_id = remove_tier(self, identity)
                result = {"ok": True, "instance_id": instance_id}
            else:
                result = {"ok": False, "error": "bad-command", "message": f"unknown op {op!r}"}
        except NodeError as exc:
            result = {"ok": False, "error": type(exc).__name__, "message": str(exc)}
        except ValueError as exc:
            result = {"ok": False, "error": "bad-command", "message": str(exc)}
        try:
            self.registrar.complete_command(self.node_id, command_id, result)
        except Exception:
            logger.exception("command result report failed")

    # -- snapshots --------------------------------------------------------

    def snapshot_bytes(self) -> bytes:
        store = self.ensure_store()
        return encode_snapshot(
            store.warehouse_records(), sorted(self.training_sets.items())
        )

    def restore_bytes(self, data: bytes) -> dict:
        snapshot: Snapshot = decode_snapshot(data)
        store = self.ensure_store()
        loaded = store.load_warehouse_records(snapshot.warehouse)
        restored_sets = 0
        with self._lock:
            for filename, content in snapshot.training_sets:
                if filename not in self.training_sets:
                    self.training_sets[filename] = content
                    restored_sets += 1
        return {"results_loaded": loaded, "training_sets_loaded": restored_sets}

    def close(self) -> None:
        if self._closed.is_set():
            return
        self._closed.set()
        if self.manage_server is not None:
            try:
                self.manage_server.close()
            except Exception:
                logger.exception("management server shutdown failed")
        # Generators first so no new demands arrive, then workers, then
        # the listeners and the store sweep.
        for identity in (TierIdentity.DGT, TierIdentity.DWT, TierIdentity.DST):
            self.controllers[identity].stop_all()
        if self.store is not None:
            self.store.stop_sweeper()
        if self._command_thread is not None:
            self._command_thread.join(timeout=10)
            self._command_thread = None
        if self.registrar is not None:
            self.registrar.close()


# -- the paper-shaped dispatch and the module-level tier operations -------


def controller_by_tier_identity(
    node: GipsyNode, identity: TierIdentity
) -> NodeController:
    """Total over DGT, DST and DWT; the GMT has no dynamic controller."""
    controller = node.controllers.get(identity)
    if controller is None:
        raise NoController(identity)
    return controller


def add_tier(node: GipsyNode, identity: TierIdentity) -> str:
    return controller_by_tier_identity(node, identity).add_tier()


def remove_tier(node: GipsyNode, identity: TierIdentity) -> str:
    return controller_by_tier_identity(node, identity).remove_tier()


# -- bootstrap ------------------------------------------------------------


def bootstrap(
    config: NodeConfiguration,
    *,
    registrar=None,
    workload: WorkloadDefinition | None = None,
    executors: dict | None = None,
    start_manage: bool = True,
) -> GipsyNode:
    """Start a node from a validated configuration.

    GMT nodes come up self-contained: registry, registration store
    listener, self-registration, then the management API. Other nodes
    register with the GMT named in the configuration and start their
    command poller before any initial tiers.

    Raises:
        PortInUse, GmtUnreachable, DuplicateNodeId.
    """
    if workload is None:
        workload = (
            load_workload(config.workload_file)
            if config.workload_file is not None
            else dmarf_workload()
        )
    if config.is_gmt:
        node = GipsyNode(
            config,
            registry=GmtRegistry(),
            workload=workload,
            executors=executors,
        )
        try:
            # The registration DST always comes up with the GMT itself.
            node.controllers[TierIdentity.DST].add_tier()
            host, port = node.store_address
            node.registry.set_instance_info({"store.address": f"{host}:{port}"})
            node.registry.register(node.node_id, gmt=True)
            node.registrar = LocalRegistrar(node.registry)
            node._report_counts()
            _start_initial_tiers(node, skip_one_dst=True)
            if start_manage and config.manage_listen is not None:
                from .manage import ManagementServer

                node.manage_server = ManagementServer(node, config.manage_listen)
                node.manage_server.start()
        except Exception:
            node.close()
            raise
        return node

    if registrar is None:
        host, port = config.gmt_address
        registrar = HttpRegistrar(f"http://{host}:{port}")
    info = registrar.register(config.node_id)
    node = GipsyNode(config, workload=workload, executors=executors)
    node.registrar = registrar
    try:
        address_text = info.get("store.address")
        if address_text:
            host_text, _, port_text = address_text.rpartition(":")
            node.store_address = (host_text, int(port_text))
        node.start_command_poller()
        _start_initial_tiers(node, skip_one_dst=False)
        node._report_counts()
    except Exception:
        node.close()
        raise
    return node


def _start_initial_tiers(node: GipsyNode, skip_one_dst: bool) -> None:
    # On a GMT node the registration DST already satisfies one configured
    # DST entry; further entries start extra listeners.
    skipped = False
    for name in node.config.tiers_initial:
        if name == "GMT":
            continue
        if name == "DST" and skip_one_dst and not skipped:
            skipped = True
            continue
        add_tier(node, TierIdentity(name))
