"""Transports: sim round trips, ACL framing, UDP loopback, HCI stub."""

import pytest

from l2capfuzz.codec import CommandKind, L2capPacket, decode, encode
from l2capfuzz.simulator import BugProfile, DeviceProfile
from l2capfuzz.states import Job, L2capState
from l2capfuzz.transport import (
    ACL_HANDLE_FLAGS,
    ACL_HEADER,
    HciTransport,
    SimTransport,
    TransportUnavailable,
    UdpLoopbackTransport,
)


def echo_frame(identifier=0x10, garbage=b""):
    return encode(L2capPacket.build(CommandKind.ECHO_REQ, identifier, garbage_tail=garbage))


def test_sim_transport_round_trip(clean_profile):
    transport = SimTransport(clean_profile)
    outcome = transport.exchange(echo_frame(garbage=b"hello"))
    assert outcome.is_reply
    reply = decode(outcome.payload)
    assert reply.kind is CommandKind.ECHO_RSP
    assert reply.garbage_tail == b"hello"


def test_sim_transport_ping(clean_profile):
    transport = SimTransport(clean_profile)
    assert transport.ping() is True


def test_ping_goes_false_when_the_target_dies(dos_profile):
    transport = SimTransport(dos_profile)
    transport.device.prime(L2capState.WAIT_CONFIG)
    frame = encode(
        L2capPacket.build(CommandKind.CONFIG_REQ, 0x05, garbage_tail=b"!", dcid=0x0050)
    )
    assert transport.exchange(frame).kind == "silence"
    assert transport.ping() is False
    assert transport.probe_connect(0x0001) == "failed"
    transport.reset_target()
    assert transport.ping() is True


def test_acl_prologue_shape(clean_profile):
    transport = SimTransport(clean_profile, acl_framing=True)
    frame = echo_frame()
    wire = transport.frame_to_wire(frame)
    handle_flags, length = ACL_HEADER.unpack_from(wire, 0)
    assert handle_flags == ACL_HANDLE_FLAGS
    assert length == len(frame)
    assert wire[ACL_HEADER.size:] == frame
    assert transport.wire_to_frame(wire) == frame


def test_acl_prologue_validation(clean_profile):
    transport = SimTransport(clean_profile, acl_framing=True)
    with pytest.raises(ValueError):
        transport.wire_to_frame(b"\x01\x20")
    wire = transport.frame_to_wire(echo_frame())
    with pytest.raises(ValueError):
        transport.wire_to_frame(wire + b"\x00")


def test_acl_framing_is_transparent_to_the_conversation(clean_profile):
    plain = SimTransport(clean_profile)
    framed = SimTransport(clean_profile, acl_framing=True)
    frame = echo_frame(garbage=b"\x42\x42")
    assert framed.exchange(frame).payload == plain.exchange(frame).payload
    assert framed.ping() is True


def test_crash_dump_present_is_edge_triggered(crash_profile, tmp_path):
    transport = SimTransport(crash_profile, workdir=tmp_path)
    assert transport.crash_dump_present() is False
    transport.device.prime(L2capState.WAIT_CREATE)
    frame = encode(
        L2capPacket.build(CommandKind.CREATE_CHANNEL_REQ, 0x03, garbage_tail=b"\xFF")
    )
    outcome = transport.exchange(frame)
    assert outcome.kind == "reset"
    assert outcome.is_error
    assert transport.crash_dump_present() is True
    assert transport.crash_dump_present() is False


def test_scan_and_ports_pass_through(clean_profile):
    transport = SimTransport(clean_profile)
    assert transport.scan_info().mac == clean_profile.mac
    assert transport.list_ports() == clean_profile.ports


def test_udp_loopback_round_trip(clean_profile):
    transport = UdpLoopbackTransport(clean_profile)
    try:
        outcome = transport.exchange(echo_frame(garbage=b"over-udp"))
        assert outcome.is_reply
        reply = decode(outcome.payload)
        assert reply.kind is CommandKind.ECHO_RSP
        assert reply.garbage_tail == b"over-udp"
        assert transport.ping() is True
    finally:
        transport.close()


def test_udp_loopback_reports_silence_via_timeout(clean_profile):
    transport = UdpLoopbackTransport(clean_profile, timeout=0.15)
    try:
        # CONNECT_RSP at CLOSED is consumed without a reply.
        frame = encode(L2capPacket.build(CommandKind.CONNECT_RSP, 0x09))
        assert transport.exchange(frame).kind == "silence"
    finally:
        transport.close()


def test_udp_loopback_carries_connection_errors(tmp_path):
    bug = BugProfile(Job.OPEN, CommandKind.ECHO_REQ, "crash", manifestation="refused")
    transport = UdpLoopbackTransport(DeviceProfile(bugs=(bug,)), workdir=tmp_path)
    try:
        transport.device.prime(L2capState.OPEN)
        outcome = transport.exchange(echo_frame())
        assert outcome.kind == "refused"
        assert outcome.is_error
        assert transport.crash_dump_present() is True
    finally:
        transport.close()


def test_udp_loopback_close_is_clean(clean_profile):
    transport = UdpLoopbackTransport(clean_profile)
    transport.close()
    assert not transport._thread.is_alive()


def test_hci_transport_is_unavailable_everywhere():
    transport = HciTransport(adapter="hci1")
    for call in (
        lambda: transport.exchange(echo_frame()),
        lambda: transport.probe_connect(0x0001),
        lambda: transport.scan_info(),
        lambda: transport.list_ports(),
        lambda: transport.crash_dump_present(),
        lambda: transport.reset_target(),
        lambda: transport.ping(),
    ):
        with pytest.raises(TransportUnavailable, match="hci1"):
            call()
