"""Node configuration: the `key = value` property file read at bootstrap.

Validation is strict and happens entirely before any socket binds or
thread starts: unknown keys, duplicate keys and unparsable values all
abort with the offending key named. Which keys are required depends on
the node's role, derived from tiers.initial.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .errors import EdurtError

__all__ = [
    "ConfigError",
    "InvalidProperty",
    "MissingProperty",
    "NodeConfiguration",
    "TIER_NAMES",
    "CONFIG_KEYS",
    "parse_config",
    "load_config",
]

TIER_NAMES = ("DST", "DGT", "DWT", "GMT")

DEFAULT_LEASE_MS = 5_000
DEFAULT_MAX_ATTEMPTS = 3


class ConfigError(EdurtError):
    pass


class InvalidProperty(ConfigError):
    def __init__(self, key: str, reason: str) -> None:
        super().__init__(f"invalid property {key!r}: {reason}")
        self.key = key
        self.reason = reason


class MissingProperty(ConfigError):
    def __init__(self, key: str) -> None:
        super().__init__(f"missing required property {key!r}")
        self.key = key


def _parse_address(value: str) -> tuple[str, int]:
    host, sep, port_text = value.rpartition(":")
    if not sep or not host:
        raise ValueError("expected host:port")
    try:
        port = int(port_text)
    except ValueError:
        raise ValueError(f"port {port_text!r} is not an integer") from None
    if not 0 <= port <= 65535:
        raise ValueError(f"port {port} out of range")
    return host, port


def _parse_positive_int(value: str) -> int:
    try:
        number = int(value)
    except ValueError:
        raise ValueError(f"{value!r} is not an integer") from None
    if number <= 0:
        raise ValueError(f"{number} is not positive")
    return number


def _parse_tiers(value: str) -> tuple[str, ...]:
    names = tuple(part.strip() for part in value.split(",") if part.strip())
    for name in names:
        if name not in TIER_NAMES:
            raise ValueError(f"{name!r} is not one of {', '.join(TIER_NAMES)}")
    if len(set(names)) != len(names):
        raise ValueError("tier listed twice")
    return names


def _parse_stages(value: str) -> tuple[str, ...]:
    stages = tuple(part.strip() for part in value.split(",") if part.strip())
    if len(set(stages)) != len(stages):
        raise ValueError("stage listed twice")
    return stages


_PARSERS = {
    "node.id": str,
    "gmt.address": _parse_address,
    "dst.listen": _parse_address,
    "tiers.initial": _parse_tiers,
    "workload.file": str,
    "worker.stages": _parse_stages,
    "lease.ms": _parse_positive_int,
    "attempts.max": _parse_positive_int,
    "manage.listen": _parse_address,
}

CONFIG_KEYS = tuple(_PARSERS)


@dataclass(frozen=True)
class NodeConfiguration:
    """Validated bootstrap properties for one node."""

    node_id: str
    gmt_address: tuple[str, int] | None = None
    dst_listen: tuple[str, int] | None = None
    tiers_initial: tuple[str, ...] = ()
    workload_file: str | None = None
    worker_stages: tuple[str, ...] = ()
    lease_ms: int = DEFAULT_LEASE_MS
    max_attempts: int = DEFAULT_MAX_ATTEMPTS
    manage_listen: tuple[str, int] | None = None

    @property
    def is_gmt(self) -> bool:
        return "GMT" in self.tiers_initial


def parse_config(text: str) -> NodeConfiguration:
    """Parse and validate one property file.

    Raises:
        InvalidProperty: unknown key, duplicate key, malformed line, or a
            value that does not parse to the key's declared type.
        MissingProperty: node.id absent, or a key required by the node's
            role absent (GMT needs manage.listen and dst.listen, any other
            node needs gmt.address, DGT/DWT nodes need workload.file).
    """
    values: dict[str, object] = {}
    for line_number, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value_text = line.partition("=")
        key = key.strip()
        value_text = value_text.strip()
        if not sep or not key:
            raise InvalidProperty(
                key or f"line {line_number}", "expected `key = value`"
            )
        parser = _PARSERS.get(key)
        if parser is None:
            raise InvalidProperty(key, "unknown key")
        if key in values:
            raise InvalidProperty(key, "duplicate key")
        try:
            values[key] = parser(value_text)
        except ValueError as exc:
            raise InvalidProperty(key, str(exc)) from None

    if "node.id" not in values or not values["node.id"]:
        raise MissingProperty("node.id")

    config = NodeConfiguration(
        node_id=values["node.id"],
        gmt_address=values.get("gmt.address"),
        dst_listen=values.get("dst.listen"),
        tiers_initial=values.get("tiers.initial", ()),
        workload_file=values.get("workload.file"),
        worker_stages=values.get("worker.stages", ()),
        lease_ms=values.get("lease.ms", DEFAULT_LEASE_MS),
        max_attempts=values.get("attempts.max", DEFAULT_MAX_ATTEMPTS),
        manage_listen=values.get("manage.listen"),
    )
    _check_role_requirements(config)
    return config


def _check_role_requirements(config: NodeConfiguration) -> None:
    if config.is_gmt:
        if config.manage_listen is None:
            raise MissingProperty("manage.listen")
        if config.dst_listen is None:
            raise MissingProperty("dst.listen")
    else:
        if config.gmt_address is None:
            raise MissingProperty("gmt.address")
    if {"DGT", "DWT"} & set(config.tiers_initial) and config.workload_file is None:
        raise MissingProperty("workload.file")
    if "DST" in config.tiers_initial and config.dst_listen is None:
        raise MissingProperty("dst.listen")


def load_config(path: str | Path) -> NodeConfiguration:
    return parse_config(Path(path).read_text(encoding="utf-8"))
