"""Workload definitions: the declarative stage chain a generator drives.

A workload is a simple chain: stage k feeds its result to stage k+1 as
the payload, and the final stage's result resolves the job. Each stage
names an executor; whether that executor exists is checked against a
registry at registration time, not at load time.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .errors import EdurtError

__all__ = [
    "WorkloadError",
    "InvalidWorkload",
    "UnknownWorkload",
    "StageDefinition",
    "WorkloadDefinition",
    "parse_workload",
    "load_workload",
]


class WorkloadError(EdurtError):
    pass


class InvalidWorkload(WorkloadError):
    pass


class UnknownWorkload(WorkloadError):
    def __init__(self, workload_id: str) -> None:
        super().__init__(f"no workload named {workload_id!r}")
        self.workload_id = workload_id


@dataclass(frozen=True)
class StageDefinition:
    stage_id: str
    executor_id: str
    next_stage: str | None = None

    @property
    def is_final(self) -> bool:
        return self.next_stage is None


@dataclass(frozen=True)
class WorkloadDefinition:
    """An ordered chain of stages; construction validates chain shape."""

    workload_id: str
    stages: tuple[StageDefinition, ...]

    def __post_init__(self) -> None:
        if not self.workload_id:
            raise InvalidWorkload("workload_id must be non-empty")
        if not self.stages:
            raise InvalidWorkload("a workload needs at least one stage")
        ids = [stage.stage_id for stage in self.stages]
        if len(set(ids)) != len(ids):
            raise InvalidWorkload("duplicate stage_id")
        for position, stage in enumerate(self.stages):
            last = position == len(self.stages) - 1
            expected = None if last else self.stages[position + 1].stage_id
            if stage.next_stage != expected:
                raise InvalidWorkload(
                    f"stage {stage.stage_id!r} must chain to {expected!r}, "
                    f"declares {stage.next_stage!r}"
                )

    @property
    def first_stage(self) -> StageDefinition:
        return self.stages[0]

    @property
    def final_stage(self) -> StageDefinition:
        return self.stages[-1]

    def stage_ids(self) -> tuple[str, ...]:
        return tuple(stage.stage_id for stage in self.stages)

    def stage(self, stage_id: str) -> StageDefinition:
        for stage in self.stages:
            if stage.stage_id == stage_id:
                return stage
        raise InvalidWorkload(f"no stage named {stage_id!r}")

    def check_executors(self, registry: dict[str, object]) -> None:
        """Every stage's executor must resolve in the registry."""
        for stage in self.stages:
            if stage.executor_id not in registry:
                raise InvalidWorkload(
                    f"stage {stage.stage_id!r} names unknown executor "
                    f"{stage.executor_id!r}"
                )


def chain(workload_id: str, stage_pairs: list[tuple[str, str]]) -> WorkloadDefinition:
    """Build a chain from ordered (stage_id, executor_id) pairs."""
    stages = []
    for position, (stage_id, executor_id) in enumerate(stage_pairs):
        last = position == len(stage_pairs) - 1
        next_stage = None if last else stage_pairs[position + 1][0]
        stages.append(StageDefinition(stage_id, executor_id, next_stage))
    return WorkloadDefinition(workload_id, tuple(stages))


def parse_workload(text: str) -> WorkloadDefinition:
    """Parse the JSON form: {"workload_id": ..., "stages": [...]}.

    Each stage object carries stage_id and executor_id; next_stage is
    implied by list order and rejected if it contradicts it.
    """
    try:
        document = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidWorkload(f"not valid JSON: {exc}") from None
    if not isinstance(document, dict):
        raise InvalidWorkload("top level must be an object")
    workload_id = document.get("workload_id")
    raw_stages = document.get("stages")
    if not isinstance(workload_id, str):
        raise InvalidWorkload("workload_id must be a string")
    if not isinstance(raw_stages, list):
        raise InvalidWorkload("stages must be a list")
    stages = []
    for position, raw in enumerate(raw_stages):
        if not isinstance(raw, dict):
            raise InvalidWorkload(f"stage {position} must be an object")
        stage_id = raw.get("stage_id")
        executor_id = raw.get("executor_id")
        if not isinstance(stage_id, str) or not stage_id:
            raise InvalidWorkload(f"stage {position} needs a stage_id")
        if not isinstance(executor_id, str) or not executor_id:
            raise InvalidWorkload(f"stage {position} needs an executor_id")
        declared_next = raw.get("next_stage")
        last = position == len(raw_stages) - 1
        if last:
            implied_next = None
        elif isinstance(raw_stages[position + 1], dict):
            implied_next = raw_stages[position + 1].get("stage_id")
        else:
            implied_next = None
        if "next_stage" in raw and declared_next != implied_next:
            raise InvalidWorkload(
                f"stage {stage_id!r} declares next_stage {declared_next!r} "
                f"but list order implies {implied_next!r}"
            )
        stages.append(StageDefinition(stage_id, executor_id, implied_next))
    return WorkloadDefinition(workload_id, tuple(stages))


def load_workload(path: str | Path) -> WorkloadDefinition:
    return parse_workload(Path(path).read_text(encoding="utf-8"))
