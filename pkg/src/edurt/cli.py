"""Operator command line.

Every verb except `node` is a thin client of exactly one management API
endpoint: the verb builds one request, prints the JSON answer, and maps
the outcome to its exit code. `node` runs a node process in the
foreground from a property file.

Exit codes: 0 for a 2xx answer, 1 for any HTTP error answer (or a
configuration error from `node`), 2 when the management API cannot be
reached at all. The GMT address comes from EDURT_GMT when set, else
--gmt, else 127.0.0.1:7780.
"""

from __future__ import annotations

import argparse
import base64
import json
import os
import signal
import sys
import threading
import urllib.error
import urllib.parse
import urllib.request
from pathlib import Path

from .config import ConfigError, load_config
from .node import NodeError, bootstrap
from .pipeline.classify import DISTANCE
from .pipeline.features import FFT

__all__ = ["main"]

DEFAULT_GMT = "127.0.0.1:7780"

_FORMAT_BY_SUFFIX = {".wav": "wav", ".txt": "text"}


class _Transport(Exception):
    """The management API could not be reached."""


def _base_url(gmt: str) -> str:
    if "://" not in gmt:
        gmt = "http://" + gmt
    return gmt.rstrip("/")


def _request(
    gmt: str,
    method: str,
    path: str,
    *,
    json_body: dict | None = None,
    raw_body: bytes | None = None,
    timeout: float = 60.0,
):
    """One HTTP exchange; returns (status, decoded body)."""
    url = _base_url(gmt) + path
    data = None
    headers = {}
    if json_body is not None:
        data = json.dumps(json_body).encode("utf-8")
        headers["Content-Type"] = "application/json"
    elif raw_body is not None:
        data = raw_body
        headers["Content-Type"] = "application/octet-stream"
    request = urllib.request.Request(url, data=data, method=method, headers=headers)
    try:
        with urllib.request.urlopen(request, timeout=timeout) as response:
            status = response.status
            content_type = response.headers.get("Content-Type", "")
            payload = response.read()
    except urllib.error.HTTPError as exc:
        status = exc.code
        content_type = exc.headers.get("Content-Type", "") if exc.headers else ""
        payload = exc.read()
    except urllib.error.URLError as exc:
        raise _Transport(f"cannot reach management API at {url}: {exc.reason}")
    except OSError as exc:
        raise _Transport(f"cannot reach management API at {url}: {exc}")
    if "application/json" in content_type:
        try:
            return status, json.loads(payload)
        except ValueError:
            pass
    return status, payload


def _finish(status: int, body) -> int:
    """Print the answer and translate the status to an exit code."""
    if isinstance(body, bytes):
        text = body.decode("utf-8", "replace")
    else:
        text = json.dumps(body, indent=2, sort_keys=True)
    if status < 300:
        print(text)
        return 0
    print(text, file=sys.stderr)
    return 1


def _quote(value: str) -> str:
    return urllib.parse.quote(value, safe="")


# -- verbs ----------------------------------------------------------------


def _cmd_node(args) -> int:
    try:
        config = load_config(args.config)
    except (ConfigError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    try:
        node = bootstrap(config)
    except NodeError as exc:
        print(f"bootstrap failed: {exc}", file=sys.stderr)
        return 1
    if node.manage_server is not None:
        host, port = node.manage_server.address
        print(f"management API on http://{host}:{port}")
    if node.store_address is not None:
        print(f"demand store at {node.store_address[0]}:{node.store_address[1]}")
    print(f"node {node.node_id} running; interrupt to stop", flush=True)
    stop = threading.Event()
    signal.signal(signal.SIGTERM, lambda *_: stop.set())
    try:
        while not stop.is_set():
            stop.wait(0.5)
    except KeyboardInterrupt:
        pass
    node.close()
    return 0


def _cmd_nodes(args) -> int:
    return _finish(*_request(args.gmt, "GET", "/v1/nodes"))


def _cmd_node_info(args) -> int:
    return _finish(
        *_request(args.gmt, "GET", f"/v1/nodes/{_quote(args.node)}")
    )


def _cmd_tier_add(args) -> int:
    return _finish(*_request(
        args.gmt, "POST", f"/v1/nodes/{_quote(args.node)}/tiers",
        json_body={"identity": args.identity},
    ))


def _cmd_tier_remove(args) -> int:
    return _finish(*_request(
        args.gmt, "DELETE",
        f"/v1/nodes/{_quote(args.node)}/tiers/{_quote(args.identity)}",
    ))


def _cmd_stats(args) -> int:
    return _finish(*_request(args.gmt, "GET", "/v1/store/stats"))


def _cmd_demands(args) -> int:
    query = {}
    if args.state is not None:
        query["state"] = args.state
    if args.stage is not None:
        query["stage"] = args.stage
    if args.cursor is not None:
        query["cursor"] = str(args.cursor)
    if args.limit is not None:
        query["limit"] = str(args.limit)
    path = "/v1/demands"
    if query:
        path += "?" + urllib.parse.urlencode(query)
    return _finish(*_request(args.gmt, "GET", path))


def _cmd_submit(args) -> int:
    path = Path(args.input)
    try:
        audio = path.read_bytes()
    except OSError as exc:
        print(f"cannot read input: {exc}", file=sys.stderr)
        return 1
    audio_format = args.format
    if audio_format is None:
        audio_format = _FORMAT_BY_SUFFIX.get(path.suffix.lower(), "pcm16le")
    body = {
        "workload": args.workload,
        "mode": args.mode,
        "input": base64.b64encode(audio).decode("ascii"),
        "format": audio_format,
        "params": {
            "preprocessing": [args.noise, args.silence],
            "feature_extraction": [args.feature],
            "classification": [args.classifier],
        },
    }
    if args.id is not None:
        body["speaker_id"] = args.id
    return _finish(*_request(args.gmt, "POST", "/v1/jobs", json_body=body))


def _cmd_job(args) -> int:
    return _finish(*_request(args.gmt, "GET", f"/v1/jobs/{_quote(args.job_id)}"))


def _cmd_jobs(args) -> int:
    return _finish(*_request(args.gmt, "GET", "/v1/jobs"))


def _cmd_backup(args) -> int:
    status, body = _request(args.gmt, "GET", "/v1/store/backup")
    if status >= 300 or not isinstance(body, bytes):
        return _finish(status, body)
    try:
        Path(args.file).write_bytes(body)
    except OSError as exc:
        print(f"cannot write snapshot: {exc}", file=sys.stderr)
        return 1
    print(json.dumps({"file": args.file, "bytes": len(body)}, indent=2))
    return 0


def _cmd_restore(args) -> int:
    try:
        data = Path(args.file).read_bytes()
    except OSError as exc:
        print(f"cannot read snapshot: {exc}", file=sys.stderr)
        return 1
    return _finish(
        *_request(args.gmt, "POST", "/v1/store/restore", raw_body=data)
    )


def _cmd_schema(args) -> int:
    return _finish(
        *_request(args.gmt, "GET", f"/v1/schema/{_quote(args.tier)}")
    )


# -- argument wiring ------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="edurt",
        description="Run and steer a demand-driven execution network.",
    )
    parser.add_argument(
        "--gmt",
        default=DEFAULT_GMT,
        help="management API address as host:port "
        f"(default {DEFAULT_GMT}; EDURT_GMT wins when set)",
    )
    verbs = parser.add_subparsers(dest="verb", required=True)

    node = verbs.add_parser("node", help="run a node from a property file")
    node.add_argument("--config", required=True, help="property file path")
    node.set_defaults(func=_cmd_node)

    nodes = verbs.add_parser("nodes", help="list registered nodes")
    nodes.set_defaults(func=_cmd_nodes)

    node_info = verbs.add_parser("node-info", help="show one node")
    node_info.add_argument("node", help="node id")
    node_info.set_defaults(func=_cmd_node_info)

    tier = verbs.add_parser("tier", help="add or remove tier instances")
    tier_verbs = tier.add_subparsers(dest="tier_verb", required=True)
    tier_add = tier_verbs.add_parser("add", help="start one tier instance")
    tier_add.add_argument("node", help="node id")
    tier_add.add_argument("identity", help="tier identity (DST, DGT or DWT)")
    tier_add.set_defaults(func=_cmd_tier_add)
    tier_remove = tier_verbs.add_parser("remove", help="stop one tier instance")
    tier_remove.add_argument("node", help="node id")
    tier_remove.add_argument("identity", help="tier identity (DST, DGT or DWT)")
    tier_remove.set_defaults(func=_cmd_tier_remove)

    stats = verbs.add_parser("stats", help="demand store counters")
    stats.set_defaults(func=_cmd_stats)

    demands = verbs.add_parser("demands", help="page through demands")
    demands.add_argument("--state", help="PENDING, INPROCESS, COMPLETED or FAILED")
    demands.add_argument("--stage", help="stage id filter")
    demands.add_argument("--cursor", type=int, help="page cursor")
    demands.add_argument("--limit", type=int, help="page size")
    demands.set_defaults(func=_cmd_demands)

    submit = verbs.add_parser("submit", help="submit a train or classify job")
    submit.add_argument("--workload", default="dmarf", help="workload id")
    submit.add_argument(
        "--mode", required=True, choices=("train", "classify")
    )
    submit.add_argument("--input", required=True, help="audio file path")
    submit.add_argument(
        "--format", choices=("pcm16le", "wav", "text"),
        help="audio format (default: guessed from the file suffix)",
    )
    submit.add_argument("--id", help="speaker id (required to train)")
    submit.add_argument(
        "--feature", type=int, default=FFT,
        help=f"feature extraction method id (default {FFT})",
    )
    submit.add_argument(
        "--classifier", type=int, default=DISTANCE,
        help=f"classifier id (default {DISTANCE})",
    )
    submit.add_argument(
        "--noise", action="store_true", help="remove noise while preprocessing"
    )
    submit.add_argument(
        "--silence", action="store_true", help="remove silence while preprocessing"
    )
    submit.set_defaults(func=_cmd_submit)

    job = verbs.add_parser("job", help="show one job")
    job.add_argument("job_id")
    job.set_defaults(func=_cmd_job)

    jobs = verbs.add_parser("jobs", help="list jobs")
    jobs.set_defaults(func=_cmd_jobs)

    backup = verbs.add_parser("backup", help="download a store snapshot")
    backup.add_argument("--file", required=True, help="where to write it")
    backup.set_defaults(func=_cmd_backup)

    restore = verbs.add_parser("restore", help="upload a store snapshot")
    restore.add_argument("--file", required=True, help="snapshot to upload")
    restore.set_defaults(func=_cmd_restore)

    schema = verbs.add_parser("schema", help="configuration keys for a tier")
    schema.add_argument("tier", help="GMT, DST, DGT or DWT")
    schema.set_defaults(func=_cmd_schema)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    override = os.environ.get("EDURT_GMT")
    if override:
        args.gmt = override
    try:
        return args.func(args)
    except _Transport as exc:
        print(str(exc), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
