"""Acceptance gate: one test per shipping criterion, one line per run.

Each test exercises its contract end to end at full stated scale and
tolerance. Oracles come from the module suites that first pinned them
(the hand-enumerated transition table, the byte-layout builders, the
synthetic speaker corpus) so the gate and the unit tests agree on a
single independent statement of every contract.
"""

from __future__ import annotations

import random
import socket
import threading
import time

import numpy as np
import pytest

import corpus
from test_demands import (
    EVENT_SAMPLES,
    ILLEGAL,
    TRANSITION_ORACLE,
    _check_invariants,
    _demand_in_state,
)
from test_tiers import gmt_config, wait_until
from test_transport import make_store, run_script
from test_wire import GOLDEN_DIR, _random_message, golden_cases

from edurt.backup import CorruptSnapshot
from edurt.config import InvalidProperty, load_config
from edurt.demands import (
    DemandState,
    DemandType,
    IllegalTransition,
    new_demand,
    transition,
)
from edurt.node import TierIdentity, add_tier, bootstrap, remove_tier
from edurt.pipeline.audio import Sample, preprocess
from edurt.pipeline.executors import (
    default_params,
    dmarf_workload,
    empty_training_set,
    initial_payload,
    pipeline_executors,
    run_sequential,
)
from edurt.pipeline.features import FFT, FFT_BINS, FFT_WINDOW, extract_features
from edurt.pipeline.params import (
    PREPROCESSING,
    ModuleParams,
    NullParameters,
    UnknownModuleType,
    derive_preprocessing_flags,
)
from edurt.pipeline.payloads import (
    decode_result_set,
    decode_stage_payload,
    encode_training_set,
)
from edurt.store import CachedResult, DemandStore, Result
from edurt.transport import (
    DemandDispatcher,
    InProcessAgent,
    StoreServer,
    StoreService,
    TcpAgent,
)
from edurt.wire import decode_frame, encode_frame
from edurt.worker import WorkerLoop
from edurt.workload import chain


def _single_stage_store(lease_ms: int = 60_000, max_attempts: int = 3) -> DemandStore:
    store = DemandStore(lease_ms=lease_ms, max_attempts=max_attempts)
    store.register_workload("w", ("job",))
    return store


def _worker(store: DemandStore, executor, **kwargs) -> WorkerLoop:
    return WorkerLoop(
        DemandDispatcher(InProcessAgent(StoreService(store))),
        chain("w", [("job", "runner")]),
        {"runner": executor},
        poll_interval=0.005,
        **kwargs,
    )


def test_demand_state_machine_full_table_and_ten_thousand_event_fuzz():
    begin = time.monotonic()
    for (state, event_type), expected in TRANSITION_ORACLE.items():
        demand = _demand_in_state(state)
        event = EVENT_SAMPLES[event_type]
        if expected is ILLEGAL:
            with pytest.raises(IllegalTransition):
                transition(demand, event)
        else:
            assert transition(demand, event).state is expected
    rng = random.Random(0xACCE01)
    events = list(EVENT_SAMPLES.values())
    demand = _demand_in_state(DemandState.PENDING)
    for _ in range(10_000):
        event = rng.choice(events)
        expected = TRANSITION_ORACLE[(demand.state, type(event))]
        if expected is ILLEGAL:
            with pytest.raises(IllegalTransition):
                transition(demand, event)
        else:
            demand = transition(demand, event)
            assert demand.state is expected
            _check_invariants(demand)
        if demand.state in (DemandState.COMPLETED, DemandState.FAILED):
            demand = _demand_in_state(DemandState.PENDING)
    assert time.monotonic() - begin < 5.0


def test_identical_demand_after_completion_is_served_from_cache_without_execution():
    store = _single_stage_store()
    calls: list[bytes] = []
    loop = _worker(store, lambda data: calls.append(data) or data + b"!")
    loop.start_worker()
    try:
        first = new_demand("w", "job", DemandType.PROCEDURAL, b"the-input")
        store.deposit_demand(first)
        outcome = store.withdraw_result(first.signature, wait=True, timeout_ms=10_000)
        assert outcome == Result(b"the-input!")
        second = new_demand("w", "job", DemandType.PROCEDURAL, b"the-input")
        assert store.deposit_demand(second) == CachedResult(b"the-input!")
        stats = store.store_stats()
        assert stats["cache_hits"] == 1
        assert stats["deposits"] == 2
        assert stats["completed"] == 1
        assert calls == [b"the-input"]
    finally:
        loop.stop_worker()


def test_hundred_demands_eight_workers_complete_exactly_once_twenty_times():
    begin = time.monotonic()
    for run in range(20):
        store = _single_stage_store()
        delivered: list[bytes] = []
        delivered_lock = threading.Lock()

        def runner(payload: bytes, sink=delivered, lock=delivered_lock) -> bytes:
            with lock:
                sink.append(payload)
            return payload

        loops = [
            _worker(store, runner, name=f"once-{run}-{n}") for n in range(8)
        ]
        for loop in loops:
            loop.start_worker()
        try:
            payloads = [f"run-{run}-demand-{n}".encode() for n in range(100)]
            for payload in payloads:
                store.deposit_demand(
                    new_demand("w", "job", DemandType.PROCEDURAL, payload)
                )
            wait_until(
                lambda: store.store_stats()["completed"] == 100, timeout=20
            )
        finally:
            for loop in loops:
                loop.stop_worker()
        assert sorted(delivered) == sorted(payloads)
        page, _ = store.list_demands(limit=150)
        assert len(page) == 100
        assert all(entry.state is DemandState.COMPLETED for entry in page)
        assert all(entry.attempts == 1 for entry in page)
        stats = store.store_stats()
        assert stats["requeues"] == 0
        assert stats["failures"] == 0
        assert stats["coalesced"] == 0
    assert time.monotonic() - begin < 30.0


def test_worker_death_mid_lease_recovers_within_two_lease_windows():
    lease_ms = 400

    def runner(payload: bytes) -> bytes:
        return payload + b"!"

    oracle_begin = time.monotonic()
    runner(b"probe")
    oracle_s = time.monotonic() - oracle_begin

    for run in range(10):
        store = _single_stage_store(lease_ms=lease_ms)
        store.start_sweeper()
        crashed = [False]  # whichever worker withdraws first dies mid-lease

        def die_once(demand, flag=crashed) -> bool:
            if flag[0]:
                return False
            flag[0] = True
            return True

        loops = [
            _worker(store, runner, fault_hook=die_once, name=f"recover-{run}-{n}")
            for n in range(2)
        ]
        for loop in loops:
            loop.start_worker()
        try:
            payload = f"job-{run}".encode()
            demand = new_demand("w", "job", DemandType.PROCEDURAL, payload)
            begin = time.monotonic()
            store.deposit_demand(demand)
            outcome = store.withdraw_result(
                demand.signature, wait=True, timeout_ms=10_000
            )
            elapsed = time.monotonic() - begin
        finally:
            for loop in loops:
                loop.stop_worker()
            store.stop_sweeper()
        assert outcome == Result(payload + b"!")
        assert elapsed <= 2 * (lease_ms / 1000.0) + oracle_s
        page, _ = store.list_demands()
        assert len(page) == 1
        assert page[0].state is DemandState.COMPLETED
        assert page[0].attempts == 2
        assert store.store_stats()["requeues"] == 1


def test_distributed_four_stage_run_reproduces_sequential_bytes_on_thirty_inputs():
    params = default_params(FFT)
    workload = dmarf_workload()
    executors = pipeline_executors()
    ts_bytes = encode_training_set(empty_training_set(params))
    for speaker, audio in corpus.training_utterances(2):
        trained = run_sequential(
            workload,
            executors,
            initial_payload("train", audio, "pcm16le", params, speaker, ts_bytes),
        )
        ts_bytes = decode_stage_payload(trained).body
    inputs = corpus.heldout_utterances(10)
    assert len(inputs) == 30
    sequential = [
        run_sequential(
            workload,
            executors,
            initial_payload("classify", audio, "pcm16le", params, None, ts_bytes),
        )
        for _, audio in inputs
    ]
    envelope = decode_stage_payload(sequential[0])
    assert envelope.body_kind == "result-set"
    assert decode_result_set(envelope.body).top()[0] in corpus.SPEAKERS

    node = bootstrap(gmt_config(node_id="accept-seq-eq"), start_manage=False)
    try:
        add_tier(node, TierIdentity.DWT)
        add_tier(node, TierIdentity.DGT)
        host = node.controllers[TierIdentity.DGT].any_host()
        for expected, (_, audio) in zip(sequential, inputs):
            got = host.submit(
                initial_payload("classify", audio, "pcm16le", params, None, ts_bytes)
            ).result(timeout=30)
            assert got == expected
    finally:
        node.close()


def test_fft_features_match_naive_dft_and_parseval_on_four_hundred_signals():
    # The oracle is the transform's defining sum evaluated as one dense
    # matrix product; exponents are reduced modulo the window length so
    # no twiddle angle leaves the first turn.
    indices = np.outer(np.arange(FFT_WINDOW), np.arange(FFT_WINDOW)) % FFT_WINDOW
    dft = np.exp(-2j * np.pi * indices / FFT_WINDOW)
    rng = random.Random(0xACCE06)
    for length in (8, 64, 256, 1024):
        for _ in range(100):
            values = tuple(rng.uniform(-1.0, 1.0) for _ in range(length))
            window = np.zeros(FFT_WINDOW)
            window[:length] = values
            spectrum = dft @ window
            got = np.asarray(extract_features(FFT, Sample(values)).values)
            want = np.abs(spectrum[:FFT_BINS])
            assert float(np.max(np.abs(got - want))) <= 1e-9
            time_energy = float(np.sum(window * window))
            freq_energy = float(np.sum(np.abs(spectrum) ** 2)) / FFT_WINDOW
            assert abs(freq_energy - time_energy) <= 1e-9 * time_energy


def test_three_speaker_recognition_holds_ninety_percent_and_distributed_matches():
    params = default_params(FFT)
    workload = dmarf_workload()
    executors = pipeline_executors()
    train = corpus.training_utterances(5)
    heldout = corpus.heldout_utterances(10)
    assert len(heldout) == 30

    ts_bytes = encode_training_set(empty_training_set(params))
    for speaker, audio in train:
        trained = run_sequential(
            workload,
            executors,
            initial_payload("train", audio, "pcm16le", params, speaker, ts_bytes),
        )
        ts_bytes = decode_stage_payload(trained).body
    oracle_outputs = []
    oracle_hits = 0
    for speaker, audio in heldout:
        output = run_sequential(
            workload,
            executors,
            initial_payload("classify", audio, "pcm16le", params, None, ts_bytes),
        )
        oracle_outputs.append(output)
        top_id, _ = decode_result_set(decode_stage_payload(output).body).top()
        oracle_hits += int(top_id == speaker)
    oracle_accuracy = oracle_hits / len(heldout)
    assert oracle_accuracy >= 0.90

    node = bootstrap(gmt_config(node_id="accept-recog"), start_manage=False)
    try:
        add_tier(node, TierIdentity.DWT)
        add_tier(node, TierIdentity.DGT)
        host = node.controllers[TierIdentity.DGT].any_host()
        ts_distributed = encode_training_set(empty_training_set(params))
        for speaker, audio in train:
            envelope = host.submit(
                initial_payload(
                    "train", audio, "pcm16le", params, speaker, ts_distributed
                )
            ).result(timeout=30)
            ts_distributed = decode_stage_payload(envelope).body
        assert ts_distributed == ts_bytes
        distributed_hits = 0
        for output, (speaker, audio) in zip(oracle_outputs, heldout):
            got = host.submit(
                initial_payload(
                    "classify", audio, "pcm16le", params, None, ts_distributed
                )
            ).result(timeout=30)
            assert got == output
            top_id, _ = decode_result_set(decode_stage_payload(got).body).top()
            distributed_hits += int(top_id == speaker)
        assert distributed_hits / len(heldout) == oracle_accuracy
    finally:
        node.close()


def test_parameter_flag_tier_and_silence_contract_regressions():
    params = ModuleParams()
    with pytest.raises(UnknownModuleType) as unknown:
        params.set_params([1], 99)
    assert str(unknown.value) == "Unknown module type: 99."
    with pytest.raises(NullParameters) as null:
        params.set_params(None, PREPROCESSING)
    assert str(null.value) == "Parameters vector cannot be null."

    assert derive_preprocessing_flags([]) == (0, 0)
    assert derive_preprocessing_flags([True]) == (1, 0)
    assert derive_preprocessing_flags([True, True]) == (1, 1)

    node = bootstrap(gmt_config(node_id="accept-tiers"), start_manage=False)
    try:
        for identity in (TierIdentity.DST, TierIdentity.DWT):
            before = node.tier_counts()
            added = add_tier(node, identity)
            grown = node.tier_counts()
            assert grown[identity.value] == before[identity.value] + 1
            removed = remove_tier(node, identity)
            assert removed == added
            assert node.tier_counts() == before
    finally:
        node.close()

    processed = preprocess(Sample((1.0, 0.001, 0.000999)), default_params(FFT, silence=True))
    assert processed.samples == (1.0, 0.001)


def test_wire_codec_fuzz_golden_frames_and_transport_equivalence():
    rng = random.Random(0xACCE09)
    for _ in range(10_000):
        message = _random_message(rng)
        assert decode_frame(encode_frame(message)) == message

    for name, message, expected in golden_cases():
        on_disk = (GOLDEN_DIR / f"{name}.bin").read_bytes()
        assert on_disk == expected
        assert encode_frame(message) == on_disk
        assert decode_frame(on_disk) == message

    in_process = DemandDispatcher(InProcessAgent(StoreService(make_store())))
    server = StoreServer(make_store(), ("127.0.0.1", 0))
    server.start()
    try:
        over_tcp = DemandDispatcher(TcpAgent(server.address))
        try:
            assert run_script(in_process) == run_script(over_tcp)
        finally:
            over_tcp.close()
    finally:
        server.close()
        in_process.close()


def test_invalid_config_property_aborts_startup_before_any_port_binds(tmp_path):
    ports = []
    for _ in range(2):
        probe = socket.socket()
        probe.bind(("127.0.0.1", 0))
        ports.append(probe.getsockname()[1])
        probe.close()
    path = tmp_path / "broken.properties"
    path.write_text(
        "node.id = doomed\n"
        "tiers.initial = GMT\n"
        f"manage.listen = 127.0.0.1:{ports[0]}\n"
        f"dst.listen = 127.0.0.1:{ports[1]}\n"
        "lease.ms = soon\n",
        encoding="utf-8",
    )
    with pytest.raises(InvalidProperty) as caught:
        bootstrap(load_config(path))
    assert "lease.ms" in str(caught.value)
    for port in ports:
        probe = socket.socket()
        try:
            probe.bind(("127.0.0.1", port))  # fails if a listener survived
        finally:
            probe.close()


def test_snapshot_restore_after_restart_serves_cache_and_rejects_truncation():
    replay = chain("replay", [("only", "bump")])

    calls_first: list[bytes] = []
    first = bootstrap(
        gmt_config(node_id="snap-first"),
        workload=replay,
        executors={"bump": lambda data: calls_first.append(data) or data + b"!"},
        start_manage=False,
    )
    try:
        add_tier(first, TierIdentity.DWT)
        add_tier(first, TierIdentity.DGT)
        host = first.controllers[TierIdentity.DGT].any_host()
        assert host.submit(b"replay-me").result(timeout=15) == b"replay-me!"
        assert calls_first == [b"replay-me"]
        snapshot = first.snapshot_bytes()
    finally:
        first.close()

    calls_second: list[bytes] = []
    second = bootstrap(
        gmt_config(node_id="snap-second"),
        workload=replay,
        executors={"bump": lambda data: calls_second.append(data) or data + b"!"},
        start_manage=False,
    )
    try:
        assert second.restore_bytes(snapshot)["results_loaded"] == 1
        # No worker tier exists here: only the warehouse can answer.
        add_tier(second, TierIdentity.DGT)
        host = second.controllers[TierIdentity.DGT].any_host()
        assert host.submit(b"replay-me").result(timeout=15) == b"replay-me!"
        assert calls_second == []
        repeat = new_demand("replay", "only", DemandType.PROCEDURAL, b"replay-me")
        assert second.store.deposit_demand(repeat) == CachedResult(b"replay-me!")
        assert second.store.store_stats()["cache_hits"] == 2
        with pytest.raises(CorruptSnapshot):
            second.restore_bytes(snapshot[: len(snapshot) // 2])
    finally:
        second.close()
