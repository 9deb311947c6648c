"""Session guiding and believed-state tracking."""

from l2capfuzz.codec import CommandKind, L2capPacket, encode
from l2capfuzz.profiles import builtin_profile
from l2capfuzz.session import FuzzSession
from l2capfuzz.states import PEER_INITIATED, L2capState
from l2capfuzz.transport import SimTransport

MOVE_EVENTS = frozenset(
    {
        CommandKind.MOVE_CHANNEL_REQ,
        CommandKind.MOVE_CHANNEL_RSP,
        CommandKind.MOVE_CHANNEL_CONFIRM_REQ,
        CommandKind.MOVE_CHANNEL_CONFIRM_RSP,
    }
)


def make_session(profile, observer=None):
    transport = SimTransport(profile)
    return transport, FuzzSession(transport, observer=observer)


def test_guide_walks_the_target_into_open(clean_profile):
    sent = []
    transport, session = make_session(
        clean_profile, observer=lambda frame, outcome, kind, purpose: sent.append(purpose)
    )
    result = session.guide_to(L2capState.OPEN)
    assert result.reached
    assert bool(result)
    assert result.hops_confirmed == len(result.path) == 7
    assert session.state is L2capState.OPEN
    assert transport.device.state is L2capState.OPEN
    assert sent == ["guide"] * 7


def test_guide_to_the_current_state_sends_nothing(clean_profile):
    sent = []
    _, session = make_session(
        clean_profile, observer=lambda *args: sent.append(args)
    )
    result = session.guide_to(L2capState.CLOSED)
    assert result.reached
    assert result.path == ()
    assert sent == []


def test_peer_initiated_states_are_refused_up_front(clean_profile):
    sent = []
    _, session = make_session(
        clean_profile, observer=lambda *args: sent.append(args)
    )
    for state in PEER_INITIATED:
        result = session.guide_to(state)
        assert not result
        assert result.reason == "peer_initiated"
    assert sent == []


def test_blocked_events_make_the_move_states_pathless(clean_profile):
    _, session = make_session(clean_profile)
    result = session.guide_to(L2capState.WAIT_MOVE, blocked_events=MOVE_EVENTS)
    assert not result
    assert result.reason == "no_path"


def test_refused_hop_aborts_the_walk():
    transport, session = make_session(builtin_profile("no-move"))
    result = session.guide_to(L2capState.WAIT_MOVE)
    assert not result
    assert result.reason == "hop_failed:OPEN:move_channel_req"
    assert result.hops_confirmed == 7
    # Confirmed hops were real: both sides sit where the walk stopped.
    assert session.state is L2capState.OPEN
    assert transport.device.state is L2capState.OPEN


def test_guide_census_on_a_move_less_target():
    transport, session = make_session(builtin_profile("no-move"))
    reached, failed = [], []
    for state in sorted(set(L2capState) - PEER_INITIATED, key=lambda s: s.name):
        transport.reset_target()
        session.restart()
        if session.guide_to(state):
            reached.append(state)
        else:
            failed.append(state)
    assert len(reached) == 11
    assert sorted(s.name for s in failed) == ["WAIT_MOVE", "WAIT_MOVE_CONFIRM"]


def test_guide_census_on_a_full_target(clean_profile):
    transport, session = make_session(clean_profile)
    reached = 0
    for state in sorted(set(L2capState) - PEER_INITIATED, key=lambda s: s.name):
        transport.reset_target()
        session.restart()
        if session.guide_to(state):
            reached += 1
            assert transport.device.state is state
    assert reached == 13


def test_event_packets_carry_the_session_context(clean_profile):
    _, session = make_session(clean_profile)
    session.psm = 0x0019
    session.peer_cid = 0x0055

    connect = session.event_packet(CommandKind.CONNECT_REQ)
    assert connect.field("psm") == 0x0019
    assert connect.field("scid") == 0x0040

    config = session.event_packet(CommandKind.CONFIG_REQ)
    assert config.field("dcid") == 0x0055

    config_rsp = session.event_packet(CommandKind.CONFIG_RSP)
    assert config_rsp.field("scid") == 0x0055  # the channel reference wins

    disconnect = session.event_packet(CommandKind.DISCONNECT_REQ)
    assert disconnect.field("dcid") == 0x0055
    assert disconnect.field("scid") == 0x0040

    # Identifiers keep counting across builds.
    assert [connect.identifier, config.identifier] == [1, 2]


def test_guide_learns_the_channel_the_target_allocated(clean_profile):
    transport, session = make_session(clean_profile)
    # First dynamic slot already taken: the target will hand out 0x0041.
    transport.device.channels[0x0040] = 0x0001
    result = session.guide_to(L2capState.WAIT_CONNECT)
    assert result.reached
    assert session.peer_cid == 0x0041


def test_restart_forgets_the_conversation(clean_profile):
    transport, session = make_session(clean_profile)
    session.guide_to(L2capState.OPEN)
    transport.reset_target()
    session.restart()
    assert session.state is L2capState.CLOSED
    assert session.peer_cid == session.our_scid


def _fuzz_exchange(transport, session, kind, **overrides):
    packet = L2capPacket.build(kind, 0x77, **overrides)
    wire = encode(packet)
    outcome = transport.exchange(wire)
    session.settle(wire, outcome)
    return outcome


def test_settle_ignores_a_refused_disconnect(clean_profile):
    transport, session = make_session(clean_profile)
    session.guide_to(L2capState.OPEN)
    # Same response bytes as an accepted teardown, but the dcid points
    # nowhere: only the channel-reference predicate separates the two.
    _fuzz_exchange(transport, session, CommandKind.DISCONNECT_REQ, dcid=0x0050, scid=0x0040)
    assert session.state is L2capState.OPEN
    assert transport.device.state is L2capState.OPEN


def test_settle_follows_an_accepted_disconnect(clean_profile):
    transport, session = make_session(clean_profile)
    session.guide_to(L2capState.OPEN)
    _fuzz_exchange(transport, session, CommandKind.DISCONNECT_REQ, dcid=0x0040, scid=0x0040)
    assert session.state is L2capState.WAIT_DISCONNECT
    assert transport.device.state is L2capState.WAIT_DISCONNECT


def test_settle_on_a_silent_row_requires_the_live_channel(clean_profile):
    transport, session = make_session(clean_profile)
    session.guide_to(L2capState.WAIT_CONFIG_RSP)

    _fuzz_exchange(transport, session, CommandKind.CONFIG_RSP, scid=0x0050)
    assert session.state is L2capState.WAIT_CONFIG_RSP
    assert transport.device.state is L2capState.WAIT_CONFIG_RSP

    _fuzz_exchange(transport, session, CommandKind.CONFIG_RSP, scid=0x0040)
    assert session.state is L2capState.WAIT_IND_FINAL_RSP
    assert transport.device.state is L2capState.WAIT_IND_FINAL_RSP


def test_settle_reads_refusal_out_of_the_result_field(clean_profile):
    transport, session = make_session(clean_profile)
    session.guide_to(L2capState.OPEN)

    _fuzz_exchange(transport, session, CommandKind.CONFIG_REQ, dcid=0x0050)
    assert session.state is L2capState.OPEN

    _fuzz_exchange(transport, session, CommandKind.CONFIG_REQ, dcid=0x0040)
    assert session.state is L2capState.WAIT_CONFIG
    assert transport.device.state is L2capState.WAIT_CONFIG


def test_settle_ignores_rejects_and_incoherent_wires(clean_profile):
    transport, session = make_session(clean_profile)
    session.guide_to(L2capState.OPEN)

    # Below the dynamic window: the target answers CommandReject.
    _fuzz_exchange(transport, session, CommandKind.CONFIG_REQ, dcid=0x0010)
    assert session.state is L2capState.OPEN

    # Incoherent frame: nothing to settle.
    wire = bytearray(encode(L2capPacket.build(CommandKind.CONFIG_REQ, 0x78, dcid=0x0040)))
    wire[0] ^= 0xFF
    outcome = transport.exchange(bytes(wire))
    session.settle(bytes(wire), outcome)
    assert session.state is L2capState.OPEN
    assert transport.device.state is L2capState.OPEN
