"""Simulated L2CAP target for end-to-end validation.

The device consumes signaling frames and reacts the way a real slave
stack would: it answers well-formed commands per the shared transition
table, rejects garbage with the classic three reject reasons, and can
be seeded with bug profiles that flip it into a death state (silent
denial of service, or a crash with a tombstone-style dump file) when a
matching packet arrives.

Rejection policy, in check order:

  1. length fields disagreeing with the bytes on the wire, an unknown
     code, or a zero identifier     -> 0x0000 command not understood
  2. actual payload above the MTU   -> 0x0001 signaling MTU exceeded
  3. any channel-endpoint field outside the dynamic window
     0x0040..0xFFFF                 -> 0x0002 invalid CID in request
  4. event invalid in this state    -> 0x0002 when strict and the
     packet names a channel that is not live, else 0x0000
  5. channel table already at max_channels when a connect would
     allocate                       -> 0x0002

A subtlety worth spelling out: endpoint values inside the dynamic
window are parsed and processed even when nothing was ever allocated
there.  Real permissive stacks behave this way, and it is precisely the
surface the core-field mutation strategy aims at.  Session-invalid but
in-window packets therefore get a refusal result inside the normal
response kind, never a CommandReject, and refusals never move the state
machine.  Conformance against the transition table follows: replaying
default packets over a primed session reproduces the table exactly.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .codec import (
    CHANNEL_REFERENCE,
    CID_ENDPOINT_FIELDS,
    COMMAND_HEADER,
    DYNAMIC_CID_MAX,
    DYNAMIC_CID_MIN,
    L2CAP_HEADER,
    CommandKind,
    L2capPacket,
    decode,
    encode,
    hexdump,
)
from .states import Job, L2capState, TransitionRule, job_of, transition_table

__all__ = [
    "REASON_NOT_UNDERSTOOD",
    "REASON_MTU_EXCEEDED",
    "REASON_INVALID_CID",
    "RESULT_SUCCESS",
    "RESULT_PENDING",
    "RESULT_REFUSED",
    "Strictness",
    "Reaction",
    "FieldCondition",
    "BugProfile",
    "ServicePort",
    "DeviceProfile",
    "ScanInfo",
    "L2capDevice",
]

REASON_NOT_UNDERSTOOD = 0x0000
REASON_MTU_EXCEEDED = 0x0001
REASON_INVALID_CID = 0x0002

RESULT_SUCCESS = 0x0000
RESULT_PENDING = 0x0001
RESULT_REFUSED = 0x0002

# Which job a command belongs to, for feature gating.  Echo, info and
# CommandReject are universal and cannot be disabled.
_COMMAND_FAMILY: dict[CommandKind, Job] = {
    CommandKind.CONNECT_REQ: Job.CONNECTION,
    CommandKind.CONNECT_RSP: Job.CONNECTION,
    CommandKind.CREATE_CHANNEL_REQ: Job.CREATION,
    CommandKind.CREATE_CHANNEL_RSP: Job.CREATION,
    CommandKind.CONFIG_REQ: Job.CONFIGURATION,
    CommandKind.CONFIG_RSP: Job.CONFIGURATION,
    CommandKind.DISCONNECT_REQ: Job.DISCONNECTION,
    CommandKind.DISCONNECT_RSP: Job.DISCONNECTION,
    CommandKind.MOVE_CHANNEL_REQ: Job.MOVE,
    CommandKind.MOVE_CHANNEL_RSP: Job.MOVE,
    CommandKind.MOVE_CHANNEL_CONFIRM_REQ: Job.MOVE,
    CommandKind.MOVE_CHANNEL_CONFIRM_RSP: Job.MOVE,
}

class Strictness(Enum):
    STRICT = "strict"
    LENIENT = "lenient"


@dataclass(frozen=True)
class Reaction:
    """What the device did with one inbound frame."""

    kind: str  # "reply" | "silence" | "dead"
    payload: bytes = b""
    error: str | None = None  # reset/aborted/refused/failed when dead

    @classmethod
    def reply(cls, data: bytes) -> "Reaction":
        return cls("reply", data)

    @classmethod
    def silence(cls) -> "Reaction":
        return cls("silence")

    @classmethod
    def dead(cls, error: str) -> "Reaction":
        return cls("dead", error=error)


@dataclass(frozen=True)
class FieldCondition:
    """One comparison in a bug predicate, e.g. dcid != 0x0040."""

    field: str
    op: str  # eq ne lt le gt ge between
    value: int | tuple[int, int]

    _OPS = {
        "eq": lambda a, b: a == b,
        "ne": lambda a, b: a != b,
        "lt": lambda a, b: a < b,
        "le": lambda a, b: a <= b,
        "gt": lambda a, b: a > b,
        "ge": lambda a, b: a >= b,
        "between": lambda a, b: b[0] <= a <= b[1],
    }

    def holds(self, packet: L2capPacket) -> bool:
        if not packet.has_field(self.field):
            return False
        actual = packet.field(self.field)
        if isinstance(actual, bytes):
            return False
        return self._OPS[self.op](actual, self.value)


@dataclass(frozen=True)
class BugProfile:
    """A seeded vulnerability: where it hides and how the device dies.

    The bug arms only while the session's current job matches, fires on
    one command kind, and requires every field condition plus the
    garbage rule to hold on the decoded packet.  symptom "dos" shuts
    the service down silently; "crash" kills the connection through the
    configured transport manifestation and leaves a dump file behind.
    """

    job: Job
    command: CommandKind
    symptom: str  # "dos" | "crash"
    conditions: tuple[FieldCondition, ...] = ()
    garbage: str = "any"  # "any" | "empty" | "non_empty"
    manifestation: str = "reset"  # reset | aborted | refused | timeout
    name: str = ""

    def __post_init__(self) -> None:
        if self.symptom not in ("dos", "crash"):
            raise ValueError(f"unknown symptom {self.symptom!r}")
        if self.garbage not in ("any", "empty", "non_empty"):
            raise ValueError(f"unknown garbage rule {self.garbage!r}")
        if self.manifestation not in ("reset", "aborted", "refused", "timeout"):
            raise ValueError(f"unknown manifestation {self.manifestation!r}")

    def matches(self, current_job: Job, packet: L2capPacket) -> bool:
        if current_job is not self.job or packet.kind is not self.command:
            return False
        if self.garbage == "empty" and packet.garbage_tail:
            return False
        if self.garbage == "non_empty" and not packet.garbage_tail:
            return False
        return all(cond.holds(packet) for cond in self.conditions)


@dataclass(frozen=True)
class ServicePort:
    psm: int
    name: str = ""
    requires_pairing: bool = False


@dataclass(frozen=True)
class DeviceProfile:
    """Everything that makes one simulated target behave like itself."""

    mac: str = "08:EF:3B:2A:19:70"
    name: str = "sim-target"
    device_class: int = 0x5A020C
    oui: str = ""  # derived from mac when empty
    ports: tuple[ServicePort, ...] = (ServicePort(0x0001, "sdp"),)
    strictness: Strictness = Strictness.STRICT
    mtu: int = 672
    max_channels: int = 8
    bugs: tuple[BugProfile, ...] = ()
    disabled_jobs: frozenset[Job] = frozenset()

    def resolved_oui(self) -> str:
        return self.oui or self.mac[:8]

    def port_state(self, psm: int) -> ServicePort | None:
        for port in self.ports:
            if port.psm == psm:
                return port
        return None


@dataclass(frozen=True)
class ScanInfo:
    mac: str
    name: str
    device_class: int
    oui: str


class L2capDevice:
    """One simulated target bound to a device profile."""

    def __init__(self, profile: DeviceProfile, workdir: str | Path | None = None):
        self.profile = profile
        self.workdir = Path(workdir) if workdir else None
        self.table = transition_table()
        self.state = L2capState.CLOSED
        self.channels: dict[int, int] = {}  # cid -> psm
        self.symptom: tuple[str, str] | None = None  # (symptom, manifestation)
        self.triggered_bug: BugProfile | None = None
        self.crash_dumps: list[Path] = []
        self._dump_cursor = 0
        self._dump_seq = itertools.count(1)

    # -- lifecycle ---------------------------------------------------

    def reset(self) -> None:
        """Power-cycle: back to CLOSED, channels and symptom cleared."""
        self.state = L2capState.CLOSED
        self.channels.clear()
        self.symptom = None
        self.triggered_bug = None

    def prime(self, state: L2capState) -> None:
        """Force a session state with standard context (test/replay use).

        Outside CLOSED a primed session owns the first dynamic channel,
        exactly what a normal guided handshake would have allocated.
        """
        self.reset()
        self.state = state
        if state is not L2capState.CLOSED:
            self.channels[DYNAMIC_CID_MIN] = 0x0001

    # -- discovery ---------------------------------------------------

    def scan_info(self) -> ScanInfo:
        return ScanInfo(
            mac=self.profile.mac,
            name=self.profile.name,
            device_class=self.profile.device_class,
            oui=self.profile.resolved_oui(),
        )

    def list_ports(self) -> tuple[ServicePort, ...]:
        return self.profile.ports

    def connect_probe(self, psm: int) -> str:
        """Socket-open attempt against one port: ok, refused or failed.

        This models opening a fresh L2CAP connection to a service, a
        side channel that does not advance the signaling session under
        test.
        """
        if self.symptom is not None:
            return "failed"
        port = self.profile.port_state(psm)
        if port is None or port.requires_pairing:
            return "refused"
        return "ok"

    def ping(self) -> bool:
        """Echo health check, True while the stack still answers."""
        return self.symptom is None

    def new_crash_dump(self) -> Path | None:
        """The dump written since the last call, if any."""
        if self._dump_cursor < len(self.crash_dumps):
            dump = self.crash_dumps[self._dump_cursor]
            self._dump_cursor += 1
            return dump
        return None

    # -- frame processing ---------------------------------------------

    def handle(self, data: bytes) -> Reaction:
        if self.symptom is not None:
            return self._death_reaction()

        identifier = data[5] if len(data) >= 6 else 0

        if not self._coherent(data):
            return self._reject(identifier, REASON_NOT_UNDERSTOOD)
        if len(data) - L2CAP_HEADER.size > self.profile.mtu:
            return self._reject(identifier, REASON_MTU_EXCEEDED)

        packet = decode(data)
        kind = packet.kind
        assert kind is not None  # coherence check guarantees a known code

        for bug in self.profile.bugs:
            if bug.matches(job_of(self.state), packet):
                return self._trigger(bug, packet)

        for name, value in packet.data_fields:
            if name in CID_ENDPOINT_FIELDS and isinstance(value, int):
                if not DYNAMIC_CID_MIN <= value <= DYNAMIC_CID_MAX:
                    return self._reject(identifier, REASON_INVALID_CID)

        family = _COMMAND_FAMILY.get(kind)
        if family is not None and family in self.profile.disabled_jobs:
            return self._reject(identifier, REASON_NOT_UNDERSTOOD)

        rule = self.table[(self.state, kind)]
        if rule.is_reject:
            if (
                self.profile.strictness is Strictness.LENIENT
                and self.state is L2capState.WAIT_CONNECT
                and kind is CommandKind.CONNECT_RSP
            ):
                # Permissive stacks swallow the unsolicited response.
                return Reaction.silence()
            return self._reject(identifier, self._invalid_event_reason(packet))

        return self._apply(rule, packet)

    # -- internals ----------------------------------------------------

    def _coherent(self, data: bytes) -> bool:
        if len(data) < L2CAP_HEADER.size + COMMAND_HEADER.size:
            return False
        payload_length, _ = L2CAP_HEADER.unpack_from(data, 0)
        code, identifier, data_length = COMMAND_HEADER.unpack_from(data, L2CAP_HEADER.size)
        actual = len(data) - L2CAP_HEADER.size
        return (
            payload_length == actual
            and data_length == actual - COMMAND_HEADER.size
            and code in CommandKind._value2member_map_
            and identifier != 0
        )

    def _invalid_event_reason(self, packet: L2capPacket) -> int:
        if self.profile.strictness is Strictness.STRICT:
            ref = CHANNEL_REFERENCE.get(packet.kind)  # type: ignore[arg-type]
            if ref is not None and packet.field(ref) not in self.channels:
                return REASON_INVALID_CID
        return REASON_NOT_UNDERSTOOD

    def _reject(self, identifier: int, reason: int) -> Reaction:
        pkt = L2capPacket.build(
            CommandKind.COMMAND_REJECT, identifier or 0x01, reason=reason
        )
        return Reaction.reply(encode(pkt))

    def _death_reaction(self) -> Reaction:
        assert self.symptom is not None
        symptom, manifestation = self.symptom
        if symptom == "dos" or manifestation == "timeout":
            return Reaction.silence()
        return Reaction.dead(manifestation)

    def _trigger(self, bug: BugProfile, packet: L2capPacket) -> Reaction:
        self.symptom = (bug.symptom, bug.manifestation)
        self.triggered_bug = bug
        if bug.symptom == "crash":
            self._write_dump(bug, packet)
        return self._death_reaction()

    def _write_dump(self, bug: BugProfile, packet: L2capPacket) -> None:
        directory = self.workdir or Path.cwd()
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / f"crash_{next(self._dump_seq):04d}.txt"
        cid = 0
        ref = CHANNEL_REFERENCE.get(packet.kind)  # type: ignore[arg-type]
        if ref is not None and isinstance(packet.field(ref), int):
            cid = packet.field(ref)  # type: ignore[assignment]
        lines = [
            "*** *** *** *** *** crash dump *** *** *** *** ***",
            "signal 11 (SIGSEGV), fault addr 0x0000000c",
            "backtrace:",
            f"  #00 channel control block lookup, cid 0x{cid:04X}",
            "  #01 signaling command dispatch",
            f"state: {self.state.name}",
            f"command: {packet.kind.wire_name if packet.kind else packet.code}",
            f"identifier: 0x{packet.identifier:02X}",
            f"frame: {hexdump(encode(packet, raw=True))}",
            f"bug: {bug.name or 'unnamed'}",
        ]
        path.write_text("\n".join(lines) + "\n")
        self.crash_dumps.append(path)

    def _allocate(self) -> int | None:
        if len(self.channels) >= self.profile.max_channels:
            return None
        cid = DYNAMIC_CID_MIN
        while cid in self.channels:
            cid += 1
        return cid

    def _acceptable_psm(self, psm: int) -> bool:
        port = self.profile.port_state(psm)
        return port is not None and not port.requires_pairing

    def _move_to(self, state: L2capState | None) -> None:
        if state is None:
            return
        self.state = state
        if state is L2capState.CLOSED:
            self.channels.clear()

    def _apply(self, rule: TransitionRule, packet: L2capPacket) -> Reaction:
        kind = packet.kind
        ident = packet.identifier
        assert kind is not None

        if kind in (CommandKind.CONNECT_REQ, CommandKind.CREATE_CHANNEL_REQ):
            return self._serve_connect(rule, packet)

        if kind is CommandKind.ECHO_REQ:
            rsp = L2capPacket.build(
                CommandKind.ECHO_RSP, ident, garbage_tail=packet.garbage_tail
            )
            return Reaction.reply(encode(rsp))

        if kind is CommandKind.INFO_REQ:
            rsp = L2capPacket.build(
                CommandKind.INFO_RSP, ident, type=packet.field("type")
            )
            self._move_to(rule.next_state)
            return Reaction.reply(encode(rsp))

        # Everything else is gated on naming a live channel.
        ref = CHANNEL_REFERENCE.get(kind)
        session_valid = ref is None or packet.field(ref) in self.channels

        if kind is CommandKind.CONFIG_REQ:
            result = RESULT_SUCCESS if session_valid else RESULT_REFUSED
            rsp = L2capPacket.build(
                CommandKind.CONFIG_RSP, ident, scid=packet.field("dcid"), result=result
            )
            if session_valid:
                self._move_to(rule.next_state)
            return Reaction.reply(encode(rsp))

        if kind is CommandKind.DISCONNECT_REQ:
            rsp = L2capPacket.build(
                CommandKind.DISCONNECT_RSP,
                ident,
                dcid=packet.field("dcid"),
                scid=packet.field("scid"),
            )
            if session_valid:
                # The channel stays live until the session reaches
                # CLOSED; _move_to clears the table there.
                self._move_to(rule.next_state)
            return Reaction.reply(encode(rsp))

        if kind is CommandKind.MOVE_CHANNEL_REQ:
            result = RESULT_SUCCESS if session_valid else RESULT_REFUSED
            rsp = L2capPacket.build(
                CommandKind.MOVE_CHANNEL_RSP, ident, icid=packet.field("icid"), result=result
            )
            if session_valid:
                self._move_to(rule.next_state)
            return Reaction.reply(encode(rsp))

        if kind is CommandKind.MOVE_CHANNEL_CONFIRM_REQ:
            rsp = L2capPacket.build(
                CommandKind.MOVE_CHANNEL_CONFIRM_RSP, ident, icid=packet.field("icid")
            )
            if session_valid:
                self._move_to(rule.next_state)
            return Reaction.reply(encode(rsp))

        # Response-kind events and CommandReject: consumed silently,
        # advancing the session only when they name the live channel.
        if session_valid:
            self._move_to(rule.next_state)
        if rule.action is None:
            return Reaction.silence()
        # A response action to a response event does not occur in the
        # table; guard against future edits.
        raise AssertionError(
            f"table row {rule.state.name}/{rule.event.name} pairs a response "
            "event with a reply action"
        )

    def _serve_connect(self, rule: TransitionRule, packet: L2capPacket) -> Reaction:
        kind = packet.kind
        ident = packet.identifier
        rsp_kind = (
            CommandKind.CONNECT_RSP
            if kind is CommandKind.CONNECT_REQ
            else CommandKind.CREATE_CHANNEL_RSP
        )
        psm = packet.field("psm")
        if not self._acceptable_psm(psm):  # type: ignore[arg-type]
            rsp = L2capPacket.build(
                rsp_kind, ident, dcid=0x0000, scid=packet.field("scid"),
                result=RESULT_REFUSED, status=0,
            )
            return Reaction.reply(encode(rsp))

        if self.channels and self.state in (
            L2capState.WAIT_CONNECT,
            L2capState.WAIT_CREATE,
        ):
            # Success leg of the handshake reuses the pending channel.
            cid = min(self.channels)
            result = RESULT_SUCCESS
        else:
            allocated = self._allocate()
            if allocated is None:
                return self._reject(ident, REASON_INVALID_CID)  # table overflow
            cid = allocated
            self.channels[cid] = psm  # type: ignore[index]
            result = RESULT_PENDING if self.state is L2capState.CLOSED else RESULT_SUCCESS

        rsp = L2capPacket.build(
            rsp_kind, ident, dcid=cid, scid=packet.field("scid"),
            result=result, status=0,
        )
        self._move_to(rule.next_state)
        return Reaction.reply(encode(rsp))
