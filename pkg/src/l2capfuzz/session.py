"""Session tracking and state guiding.

A FuzzSession owns one signaling conversation with the target: it
remembers which state the target should be in, keeps the channel
context (our source CID, the CID the target handed back, the service
PSM in use), and can walk the target into any reachable state by
replaying the valid event sequence from the transition table.

Guiding is conservative.  Every hop is confirmed against the table row
that justified it: a hop whose row names a response kind must get that
response back (with a success or pending result where the response
carries one), and a silent hop is confirmed by the absence of a
CommandReject inside the receive window.  The first unconfirmed hop
aborts the walk, because fuzzing from an unknown state would poison
every verdict that follows.

States owned by peer-initiated procedures can never be guided into
from the master role; guide_to reports them unreachable without
sending anything.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

from .codec import (
    CHANNEL_REFERENCE,
    SCHEMAS,
    CodecError,
    CommandKind,
    L2capPacket,
    decode,
    encode,
)
from .mutation import IdCounter
from .simulator import RESULT_PENDING, RESULT_SUCCESS
from .states import PEER_INITIATED, L2capState, TransitionRule, find_path, transition_table
from .transport import Outcome, Transport

__all__ = ["GuideResult", "FuzzSession"]

# Response kinds whose result field must signal acceptance before a
# hop counts as confirmed.
_RESULT_CHECKED = {
    CommandKind.CONNECT_RSP: (RESULT_SUCCESS, RESULT_PENDING),
    CommandKind.CREATE_CHANNEL_RSP: (RESULT_SUCCESS, RESULT_PENDING),
    CommandKind.CONFIG_RSP: (RESULT_SUCCESS,),
    CommandKind.MOVE_CHANNEL_RSP: (RESULT_SUCCESS,),
}

ExchangeObserver = Callable[[bytes, Outcome, CommandKind, str], None]


@dataclass(frozen=True)
class GuideResult:
    reached: bool
    target: L2capState
    path: tuple[TransitionRule, ...] = ()
    hops_confirmed: int = 0
    reason: str = "ok"

    def __bool__(self) -> bool:
        return self.reached


@dataclass
class FuzzSession:
    """Master-role conversation state against one transport."""

    transport: Transport
    psm: int = 0x0001
    observer: ExchangeObserver | None = None
    state: L2capState = L2capState.CLOSED
    our_scid: int = 0x0040
    peer_cid: int = 0x0040
    ids: IdCounter = field(default_factory=IdCounter)

    # -- packet construction -------------------------------------------

    def event_packet(self, event: CommandKind) -> L2capPacket:
        """A session-valid packet for one event kind.

        Channel references point at the live conversation so the target
        accepts them; everything else keeps schema defaults.
        """
        overrides: dict[str, int] = {}
        ref = CHANNEL_REFERENCE.get(event)
        for spec in SCHEMAS[event]:
            if spec.name == "psm":
                overrides[spec.name] = self.psm
            elif spec.name == ref:
                overrides[spec.name] = self.peer_cid
            elif spec.name == "scid":
                overrides[spec.name] = self.our_scid
        return L2capPacket.build(event, self.ids.take(), **overrides)

    # -- plumbing -------------------------------------------------------

    def _exchange(self, packet: L2capPacket, purpose: str) -> Outcome:
        frame = encode(packet)
        outcome = self.transport.exchange(frame)
        if self.observer is not None:
            assert packet.kind is not None
            self.observer(frame, outcome, packet.kind, purpose)
        return outcome

    def _learn_channel(self, reply: L2capPacket) -> None:
        if reply.kind in (CommandKind.CONNECT_RSP, CommandKind.CREATE_CHANNEL_RSP):
            dcid = reply.field("dcid")
            if isinstance(dcid, int) and dcid:
                self.peer_cid = dcid

    def _confirm(self, rule: TransitionRule, outcome: Outcome) -> bool:
        if outcome.is_error:
            return False
        if rule.action is None:
            # Silent edge: any reject in the window disproves the hop.
            if outcome.kind == "silence":
                return True
            try:
                reply = decode(outcome.payload)
            except Exception:
                return False
            return reply.kind is not CommandKind.COMMAND_REJECT
        if not outcome.is_reply:
            return False
        try:
            reply = decode(outcome.payload)
        except Exception:
            return False
        if reply.kind is not rule.action:
            return False
        accepted = _RESULT_CHECKED.get(reply.kind)
        if accepted is not None and reply.field("result") not in accepted:
            return False
        self._learn_channel(reply)
        return True

    # -- guiding ----------------------------------------------------------

    def restart(self) -> None:
        """Forget the conversation after a target reset."""
        self.state = L2capState.CLOSED
        self.peer_cid = self.our_scid

    def guide_to(
        self,
        target: L2capState,
        blocked_events: frozenset[CommandKind] = frozenset(),
    ) -> GuideResult:
        """Drive the target from the current state into target."""
        if target is self.state:
            return GuideResult(True, target)
        if target in PEER_INITIATED:
            return GuideResult(False, target, reason="peer_initiated")
        path = find_path(self.state, target, blocked_events)
        if path is None:
            return GuideResult(False, target, reason="no_path")

        for index, rule in enumerate(path):
            outcome = self._exchange(self.event_packet(rule.event), "guide")
            if not self._confirm(rule, outcome):
                return GuideResult(
                    False,
                    target,
                    path=tuple(path),
                    hops_confirmed=index,
                    reason=f"hop_failed:{rule.state.name}:{rule.event.wire_name}",
                )
            assert rule.next_state is not None
            self.state = rule.next_state

        return GuideResult(True, target, path=tuple(path), hops_confirmed=len(path))

    def settle(self, wire: bytes, outcome: Outcome) -> None:
        """Fold one fuzz exchange back into the believed session state.

        Mutated packets rarely move a session, but when one lands on a
        transition row and passes the target's session gate we must
        follow it, otherwise the next guide starts from a stale state.
        Acceptance is read from the response result where the response
        carries one; responses without a result field are ambiguous
        between acceptance and refusal, so for those (and for silent
        rows) the hop counts only when the packet named the live
        channel, the same predicate the target applies.
        """
        try:
            seen = decode(wire)
        except CodecError:
            return  # incoherent on the wire, the target rejected it
        if seen.kind is None:
            return
        rule = transition_table()[(self.state, seen.kind)]
        if rule.is_reject or rule.next_state is None:
            return

        ref = CHANNEL_REFERENCE.get(seen.kind)
        named_live = ref is not None and seen.field(ref) == self.peer_cid

        if rule.action is None:
            if outcome.kind == "silence" and named_live:
                self.state = rule.next_state
            return

        if not outcome.is_reply:
            return
        try:
            reply = decode(outcome.payload)
        except CodecError:
            return
        if reply.kind is not rule.action:
            return
        accepted = _RESULT_CHECKED.get(reply.kind)
        if accepted is not None:
            if reply.field("result") in accepted:
                self._learn_channel(reply)
                self.state = rule.next_state
            return
        if named_live or ref is None:
            self.state = rule.next_state
