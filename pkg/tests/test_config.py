"""Configuration and workload-definition validation tests."""

from __future__ import annotations

import pytest

from edurt.config import (
    CONFIG_KEYS,
    InvalidProperty,
    MissingProperty,
    NodeConfiguration,
    load_config,
    parse_config,
)
from edurt.workload import (
    InvalidWorkload,
    StageDefinition,
    WorkloadDefinition,
    chain,
    parse_workload,
)

GMT_CONFIG = """
# management node
node.id = gmt-1
tiers.initial = GMT
manage.listen = 127.0.0.1:7780
dst.listen = 127.0.0.1:7781
"""

WORKER_CONFIG = """
node.id = w1
gmt.address = 127.0.0.1:7780
tiers.initial = DWT
workload.file = workload.json
worker.stages = classify
lease.ms = 2000
attempts.max = 5
"""


class TestParseConfig:
    def test_gmt_happy_path(self):
        config = parse_config(GMT_CONFIG)
        assert config.node_id == "gmt-1"
        assert config.is_gmt
        assert config.manage_listen == ("127.0.0.1", 7780)
        assert config.dst_listen == ("127.0.0.1", 7781)
        assert config.lease_ms == 5000 and config.max_attempts == 3

    def test_worker_happy_path(self):
        config = parse_config(WORKER_CONFIG)
        assert not config.is_gmt
        assert config.gmt_address == ("127.0.0.1", 7780)
        assert config.tiers_initial == ("DWT",)
        assert config.worker_stages == ("classify",)
        assert config.lease_ms == 2000 and config.max_attempts == 5

    def test_comments_and_blank_lines_are_ignored(self):
        config = parse_config(
            "node.id = n1  # trailing comment\n\n# full-line comment\ngmt.address = h:1\n"
        )
        assert config.node_id == "n1"
        assert config.gmt_address == ("h", 1)

    def test_unparsable_duration_names_the_key(self):
        with pytest.raises(InvalidProperty) as info:
            parse_config("node.id = n\ngmt.address = h:1\nlease.ms = banana\n")
        assert info.value.key == "lease.ms"
        assert "banana" in info.value.reason

    def test_missing_node_id(self):
        with pytest.raises(MissingProperty) as info:
            parse_config("gmt.address = h:1\n")
        assert info.value.key == "node.id"

    def test_unknown_key_is_rejected(self):
        with pytest.raises(InvalidProperty) as info:
            parse_config("node.id = n\nngt.address = h:1\n")
        assert info.value.key == "ngt.address"

    def test_duplicate_key_is_rejected(self):
        with pytest.raises(InvalidProperty) as info:
            parse_config("node.id = a\nnode.id = b\n")
        assert info.value.reason == "duplicate key"

    def test_line_without_equals_is_rejected(self):
        with pytest.raises(InvalidProperty):
            parse_config("node.id\n")

    @pytest.mark.parametrize(
        "value,fragment",
        [
            ("nohost", "host:port"),
            (":17", "host:port"),
            ("h:x", "not an integer"),
            ("h:70000", "out of range"),
        ],
    )
    def test_bad_addresses(self, value, fragment):
        with pytest.raises(InvalidProperty) as info:
            parse_config(f"node.id = n\ngmt.address = {value}\n")
        assert fragment in info.value.reason

    def test_unknown_tier_name_is_rejected(self):
        with pytest.raises(InvalidProperty) as info:
            parse_config("node.id = n\ngmt.address = h:1\ntiers.initial = DWT, DXT\n")
        assert "DXT" in info.value.reason

    def test_non_positive_attempts_rejected(self):
        with pytest.raises(InvalidProperty):
            parse_config("node.id = n\ngmt.address = h:1\nattempts.max = 0\n")

    def test_gmt_requires_manage_and_dst_listen(self):
        with pytest.raises(MissingProperty) as info:
            parse_config("node.id = g\ntiers.initial = GMT\ndst.listen = h:1\n")
        assert info.value.key == "manage.listen"
        with pytest.raises(MissingProperty) as info:
            parse_config("node.id = g\ntiers.initial = GMT\nmanage.listen = h:1\n")
        assert info.value.key == "dst.listen"

    def test_non_gmt_requires_gmt_address(self):
        with pytest.raises(MissingProperty) as info:
            parse_config("node.id = n\n")
        assert info.value.key == "gmt.address"

    def test_worker_and_generator_tiers_require_a_workload(self):
        for tier in ("DWT", "DGT"):
            with pytest.raises(MissingProperty) as info:
                parse_config(f"node.id = n\ngmt.address = h:1\ntiers.initial = {tier}\n")
            assert info.value.key == "workload.file"

    def test_dst_tier_requires_listen_address(self):
        with pytest.raises(MissingProperty) as info:
            parse_config("node.id = n\ngmt.address = h:1\ntiers.initial = DST\n")
        assert info.value.key == "dst.listen"

    def test_every_schema_key_parses_in_one_file(self, tmp_path):
        path = tmp_path / "node.properties"
        path.write_text(
            "node.id = n\n"
            "gmt.address = 127.0.0.1:7780\n"
            "dst.listen = 127.0.0.1:0\n"
            "tiers.initial = DST, DWT, DGT\n"
            "workload.file = w.json\n"
            "worker.stages = load, classify\n"
            "lease.ms = 100\n"
            "attempts.max = 2\n"
            "manage.listen = 127.0.0.1:0\n",
            encoding="utf-8",
        )
        config = load_config(path)
        assert isinstance(config, NodeConfiguration)
        assert set(CONFIG_KEYS) == {
            "node.id",
            "gmt.address",
            "dst.listen",
            "tiers.initial",
            "workload.file",
            "worker.stages",
            "lease.ms",
            "attempts.max",
            "manage.listen",
        }


class TestWorkloadDefinition:
    def test_chain_builder_wires_next_stage(self):
        workload = chain("dmarf", [("load", "x"), ("classify", "y")])
        assert workload.first_stage.stage_id == "load"
        assert workload.first_stage.next_stage == "classify"
        assert workload.final_stage.is_final

    def test_single_stage_chain(self):
        workload = chain("one", [("only", "e")])
        assert workload.first_stage is workload.final_stage

    def test_empty_and_duplicate_chains_rejected(self):
        with pytest.raises(InvalidWorkload):
            WorkloadDefinition("w", ())
        with pytest.raises(InvalidWorkload):
            chain("w", [("a", "x"), ("a", "y")])

    def test_broken_chain_rejected(self):
        stages = (
            StageDefinition("a", "x", next_stage="c"),
            StageDefinition("b", "y", next_stage=None),
        )
        with pytest.raises(InvalidWorkload):
            WorkloadDefinition("w", stages)

    def test_final_stage_must_not_chain_onward(self):
        stages = (StageDefinition("a", "x", next_stage="ghost"),)
        with pytest.raises(InvalidWorkload):
            WorkloadDefinition("w", stages)

    def test_executor_check_against_registry(self):
        workload = chain("w", [("a", "present"), ("b", "absent")])
        with pytest.raises(InvalidWorkload) as info:
            workload.check_executors({"present": object()})
        assert "absent" in str(info.value)
        workload.check_executors({"present": object(), "absent": object()})

    def test_parse_json_document(self):
        workload = parse_workload(
            '{"workload_id": "dmarf", "stages": ['
            '{"stage_id": "load", "executor_id": "e1"},'
            '{"stage_id": "classify", "executor_id": "e2"}]}'
        )
        assert workload.stage_ids() == ("load", "classify")
        assert workload.stage("load").next_stage == "classify"

    def test_parse_rejects_contradictory_next_stage(self):
        with pytest.raises(InvalidWorkload):
            parse_workload(
                '{"workload_id": "w", "stages": ['
                '{"stage_id": "a", "executor_id": "e", "next_stage": "z"},'
                '{"stage_id": "b", "executor_id": "e"}]}'
            )

    @pytest.mark.parametrize(
        "text",
        [
            "not json",
            "[]",
            '{"workload_id": 3, "stages": []}',
            '{"workload_id": "w", "stages": "no"}',
            '{"workload_id": "w", "stages": [{"executor_id": "e"}]}',
            '{"workload_id": "w", "stages": [{"stage_id": "a"}]}',
        ],
    )
    def test_malformed_documents_rejected(self, text):
        with pytest.raises(InvalidWorkload):
            parse_workload(text)
