"""Mutation engine: draw protocol, pools, determinism, baseline contrast."""

import random

import pytest

from l2capfuzz.codec import (
    CID_ENDPOINT_FIELDS,
    SCHEMAS,
    CodecError,
    CommandKind,
    decode,
    hexdump,
)
from l2capfuzz.mutation import (
    PSM_ABNORMAL_RANGES,
    IdCounter,
    MutationConfig,
    baseline_mutate,
    generate_batch,
    mutate_command,
)

STANDARD_PSMS = {0x0001, 0x0003, 0x0011, 0x0019}


def psm_pool() -> set:
    """Independent expansion of the abnormal psm pool."""
    pool = set()
    for hi_octet in (0x01, 0x03, 0x05, 0x07, 0x09, 0x0B, 0x0D):
        base = hi_octet << 8
        pool.update(range(base, base + 0x100))
    pool.update(range(0x0000, 0x10000, 2))
    return pool


def test_pool_ranges_match_the_declared_tuples():
    expanded = set()
    for lo, hi, step in PSM_ABNORMAL_RANGES:
        expanded.update(range(lo, hi + 1, step))
    assert expanded == psm_pool()


def test_config_req_mutant_with_scripted_draws(stub_rng_factory):
    # dcid = 0x0040 + 0x8F3B = 0x8F7B, then a 4-byte garbage tail.
    stub = stub_rng_factory(
        randrange_values=[0x8F3B, 4],
        randbytes_values=[bytes.fromhex("D23A910E")],
    )
    record = mutate_command(CommandKind.CONFIG_REQ, MutationConfig(), stub, identifier=0x01)
    assert hexdump(record.wire) == "0C 00 01 00 04 01 08 00 7B 8F 00 00 D2 3A 91 0E"
    assert record.mutated_fields == (("dcid", 0x0040, 0x8F7B),)
    assert record.garbage == bytes.fromhex("D23A910E")
    assert record.changed_anything()


def test_unchanged_draws_report_nothing_changed(stub_rng_factory):
    # dcid redrawn to its own default and an empty tail: a no-op mutant.
    stub = stub_rng_factory(randrange_values=[0, 0])
    record = mutate_command(CommandKind.CONFIG_REQ, MutationConfig(), stub)
    assert record.mutated_fields == (("dcid", 0x0040, 0x0040),)
    assert record.garbage == b""
    assert not record.changed_anything()


def test_psm_draws_stay_inside_the_abnormal_pool():
    pool = psm_pool()
    config = MutationConfig(seed=11, n_per_command=1)
    batch = generate_batch([CommandKind.CONNECT_REQ], config, n=10_000)
    drawn = [new for record in batch for name, _, new in record.mutated_fields if name == "psm"]
    assert len(drawn) == 10_000
    assert set(drawn) <= pool
    assert not set(drawn) & STANDARD_PSMS
    # Both halves of the pool get exercised.
    assert any(v % 2 == 0 for v in drawn)
    assert any(v % 2 == 1 for v in drawn)


def test_cid_draws_stay_inside_the_dynamic_window():
    config = MutationConfig(seed=12)
    batch = generate_batch(
        [CommandKind.CONNECT_RSP, CommandKind.MOVE_CHANNEL_REQ], config, n=2_000
    )
    for record in batch:
        for name, _, new in record.mutated_fields:
            if name in CID_ENDPOINT_FIELDS:
                assert 0x0040 <= new <= 0xFFFF


def test_core_mode_leaves_application_fields_alone():
    config = MutationConfig(seed=13)
    batch = generate_batch(list(CommandKind), config, n=20)
    touchable = CID_ENDPOINT_FIELDS | {"psm"}
    for record in batch:
        mutated_names = {name for name, _, _ in record.mutated_fields}
        assert mutated_names <= touchable
        for spec in SCHEMAS[record.kind]:
            if spec.name not in touchable:
                assert record.packet.field(spec.name) == spec.default


def test_core_wires_respect_the_mtu():
    config = MutationConfig(seed=14, garbage_max=2_000, mtu=64)
    for record in generate_batch(list(CommandKind), config, n=30):
        assert len(record.wire) - 4 <= 64
        assert len(record.garbage) <= 2_000


def test_garbage_respects_the_configured_cap():
    config = MutationConfig(seed=15, garbage_max=5)
    for record in generate_batch(list(CommandKind), config, n=100):
        assert len(record.garbage) <= 5


def test_batches_are_deterministic_and_command_major():
    config = MutationConfig(seed=3, n_per_command=25)
    # Input order must not matter: batches come out in code order.
    first = generate_batch([CommandKind.CONFIG_REQ, CommandKind.CONNECT_REQ], config)
    second = generate_batch([CommandKind.CONNECT_REQ, CommandKind.CONFIG_REQ], config)
    assert [r.wire for r in first] == [r.wire for r in second]
    assert [r.kind for r in first] == [CommandKind.CONNECT_REQ] * 25 + [
        CommandKind.CONFIG_REQ
    ] * 25
    assert [r.identifier for r in first] == [(i % 255) + 1 for i in range(50)]


def test_identifier_counter_wraps_without_zero():
    ids = IdCounter(start=0xFE)
    assert [ids.take() for _ in range(4)] == [0xFE, 0xFF, 0x01, 0x02]
    with pytest.raises(ValueError):
        IdCounter(start=0)


def test_config_validation_rejects_bad_knobs():
    with pytest.raises(ValueError):
        MutationConfig(n_per_command=0)
    with pytest.raises(ValueError):
        MutationConfig(mtu=10)
    with pytest.raises(ValueError):
        MutationConfig(garbage_max=-1)
    with pytest.raises(ValueError):
        MutationConfig(cid_range=(0x50, 0x40))


def _incoherent(wire: bytes) -> bool:
    try:
        packet = decode(wire)
    except CodecError:
        return True
    return packet.kind is None


def test_baseline_always_picks_something():
    rng = random.Random(21)
    config = MutationConfig(seed=21)
    for kind in CommandKind:
        for _ in range(50):
            record = baseline_mutate(kind, config, rng)
            assert record.mode == "baseline"
            assert record.mutated_fields or record.rng_draws


def test_baseline_header_lies_break_coherence_and_only_they_do():
    # A mutant is wire-incoherent exactly when a dependent header field
    # (payload_length, data_length, code) actually changed value.
    rng = random.Random(22)
    config = MutationConfig(seed=22)
    dependent = {"payload_length", "data_length", "code"}
    checked = 0
    for kind in CommandKind:
        for _ in range(200):
            record = baseline_mutate(kind, config, rng)
            lied = any(
                name in dependent and old != new
                for name, old, new in record.mutated_fields
            )
            assert _incoherent(record.wire) == lied, hexdump(record.wire)
            checked += 1
    assert checked == 17 * 200


def test_baseline_code_redraws_are_always_unknown():
    known = {int(kind) for kind in CommandKind}
    rng = random.Random(23)
    config = MutationConfig(seed=23)
    for _ in range(500):
        record = baseline_mutate(CommandKind.CONNECT_REQ, config, rng)
        for name, _, new in record.mutated_fields:
            if name == "code":
                assert new not in known


def test_baseline_never_touches_the_identifier():
    rng = random.Random(24)
    config = MutationConfig(seed=24)
    for i in range(300):
        record = baseline_mutate(CommandKind.CONFIG_REQ, config, rng, identifier=i % 255 + 1)
        assert record.identifier == i % 255 + 1
        assert record.wire[5] == i % 255 + 1
        assert all(name != "identifier" for name, _, _ in record.mutated_fields)


def test_generate_batch_rejects_unknown_mode():
    with pytest.raises(ValueError):
        generate_batch([CommandKind.ECHO_REQ], MutationConfig(), mode="chaotic")
