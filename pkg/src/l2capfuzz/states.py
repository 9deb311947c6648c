"""Channel state machine: states, jobs, and the transition table.

A signaling session walks nineteen channel states.  Grouping them by
what the session is currently trying to get done gives seven jobs, and
each job has a small set of commands that are worth sending while it is
in progress (for the bracketing Closed/Open jobs that set is every
command).  The per-state behavior itself lives in a plain-text
transition table (data/transition_table.txt) so it can be audited row
by row; this module loads it, answers lookups, and finds guide paths
through it.

The table is shared verbatim with the target simulator, which is what
makes conformance checkable: both sides read the same rows.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from importlib import resources

from .codec import CommandKind

__all__ = [
    "L2capState",
    "Job",
    "JOB_ORDER",
    "JOB_STATES",
    "PEER_INITIATED",
    "TransitionRule",
    "TableError",
    "job_of",
    "valid_commands",
    "transition_table",
    "step",
    "find_path",
    "reachable_states",
    "dump_table",
]


class L2capState(Enum):
    CLOSED = "CLOSED"
    WAIT_CONNECT = "WAIT_CONNECT"
    WAIT_CONNECT_RSP = "WAIT_CONNECT_RSP"
    WAIT_CREATE = "WAIT_CREATE"
    WAIT_CREATE_RSP = "WAIT_CREATE_RSP"
    WAIT_CONFIG = "WAIT_CONFIG"
    WAIT_CONFIG_RSP = "WAIT_CONFIG_RSP"
    WAIT_CONFIG_REQ = "WAIT_CONFIG_REQ"
    WAIT_CONFIG_REQ_RSP = "WAIT_CONFIG_REQ_RSP"
    WAIT_SEND_CONFIG = "WAIT_SEND_CONFIG"
    WAIT_IND_FINAL_RSP = "WAIT_IND_FINAL_RSP"
    WAIT_FINAL_RSP = "WAIT_FINAL_RSP"
    WAIT_CONTROL_IND = "WAIT_CONTROL_IND"
    WAIT_DISCONNECT = "WAIT_DISCONNECT"
    WAIT_MOVE = "WAIT_MOVE"
    WAIT_MOVE_RSP = "WAIT_MOVE_RSP"
    WAIT_MOVE_CONFIRM = "WAIT_MOVE_CONFIRM"
    WAIT_CONFIRM_RSP = "WAIT_CONFIRM_RSP"
    OPEN = "OPEN"


STATE_ORDER = tuple(L2capState)


class Job(Enum):
    CLOSED = "closed"
    CONNECTION = "connection"
    CREATION = "creation"
    CONFIGURATION = "configuration"
    DISCONNECTION = "disconnection"
    MOVE = "move"
    OPEN = "open"


# Campaign iteration order: jobs as declared, states in enum order.
JOB_ORDER = tuple(Job)

JOB_STATES: dict[Job, tuple[L2capState, ...]] = {
    Job.CLOSED: (L2capState.CLOSED,),
    Job.CONNECTION: (L2capState.WAIT_CONNECT, L2capState.WAIT_CONNECT_RSP),
    Job.CREATION: (L2capState.WAIT_CREATE, L2capState.WAIT_CREATE_RSP),
    Job.CONFIGURATION: (
        L2capState.WAIT_CONFIG,
        L2capState.WAIT_CONFIG_RSP,
        L2capState.WAIT_CONFIG_REQ,
        L2capState.WAIT_CONFIG_REQ_RSP,
        L2capState.WAIT_SEND_CONFIG,
        L2capState.WAIT_IND_FINAL_RSP,
        L2capState.WAIT_FINAL_RSP,
        L2capState.WAIT_CONTROL_IND,
    ),
    Job.DISCONNECTION: (L2capState.WAIT_DISCONNECT,),
    Job.MOVE: (
        L2capState.WAIT_MOVE,
        L2capState.WAIT_MOVE_RSP,
        L2capState.WAIT_MOVE_CONFIRM,
        L2capState.WAIT_CONFIRM_RSP,
    ),
    Job.OPEN: (L2capState.OPEN,),
}

_STATE_JOB = {state: job for job, states in JOB_STATES.items() for state in states}

_ALL_COMMANDS = frozenset(CommandKind)

_VALID_COMMANDS: dict[Job, frozenset[CommandKind]] = {
    Job.CLOSED: _ALL_COMMANDS,
    Job.CONNECTION: frozenset({CommandKind.CONNECT_REQ, CommandKind.CONNECT_RSP}),
    Job.CREATION: frozenset(
        {CommandKind.CREATE_CHANNEL_REQ, CommandKind.CREATE_CHANNEL_RSP}
    ),
    Job.CONFIGURATION: frozenset(
        {CommandKind.CONFIG_REQ, CommandKind.CONFIG_RSP}
    ),
    Job.DISCONNECTION: frozenset(
        {CommandKind.DISCONNECT_REQ, CommandKind.DISCONNECT_RSP}
    ),
    Job.MOVE: frozenset(
        {
            CommandKind.MOVE_CHANNEL_REQ,
            CommandKind.MOVE_CHANNEL_RSP,
            CommandKind.MOVE_CHANNEL_CONFIRM_REQ,
            CommandKind.MOVE_CHANNEL_CONFIRM_RSP,
        }
    ),
    Job.OPEN: _ALL_COMMANDS,
}


def job_of(state: L2capState) -> Job:
    return _STATE_JOB[state]


def valid_commands(job: Job) -> frozenset[CommandKind]:
    """Commands worth sending while this job is in progress."""
    return _VALID_COMMANDS[job]


@dataclass(frozen=True)
class TransitionRule:
    """One (state, event) row.

    action is the response kind, with two special encodings: the value
    CommandKind.COMMAND_REJECT means the event is invalid here and gets
    rejected, and None means the packet is consumed without a reply.
    next_state None means the session stays put.
    """

    state: L2capState
    event: CommandKind
    action: CommandKind | None
    next_state: L2capState | None

    @property
    def is_reject(self) -> bool:
        return self.action is CommandKind.COMMAND_REJECT


class TableError(Exception):
    """The transition table file failed validation."""


TransitionTable = dict[tuple[L2capState, CommandKind], TransitionRule]


def _table_text() -> str:
    return resources.files("l2capfuzz.data").joinpath("transition_table.txt").read_text()


def _parse(text: str) -> tuple[TransitionTable, frozenset[L2capState]]:
    rules: TransitionTable = {}
    peer: set[L2capState] = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("@peer"):
            peer.add(L2capState[line.split()[1]])
            continue
        parts = [p.strip() for p in line.split("|")]
        if len(parts) != 4:
            raise TableError(f"line {lineno}: expected 4 columns, got {len(parts)}")
        try:
            state = L2capState[parts[0]]
            event = CommandKind[parts[1]]
        except KeyError as exc:
            raise TableError(f"line {lineno}: unknown name {exc}") from exc
        if parts[2] == "-":
            action: CommandKind | None = None
        elif parts[2] == "REJECT":
            action = CommandKind.COMMAND_REJECT
        else:
            try:
                action = CommandKind[parts[2]]
            except KeyError as exc:
                raise TableError(f"line {lineno}: unknown action {exc}") from exc
        next_state = None if parts[3] == "-" else L2capState[parts[3]]
        key = (state, event)
        if key in rules:
            raise TableError(f"line {lineno}: duplicate rule for {state.name}/{event.name}")
        rules[key] = TransitionRule(state, event, action, next_state)

    # Totality: unlisted pairs reject and stay.
    for state in L2capState:
        for event in CommandKind:
            rules.setdefault(
                (state, event),
                TransitionRule(state, event, CommandKind.COMMAND_REJECT, None),
            )

    for rule in rules.values():
        if rule.is_reject and rule.next_state is not None:
            raise TableError(
                f"{rule.state.name}/{rule.event.name}: a reject must not move the session"
            )
    return rules, frozenset(peer)


@lru_cache(maxsize=1)
def _loaded() -> tuple[TransitionTable, frozenset[L2capState]]:
    return _parse(_table_text())


def transition_table() -> TransitionTable:
    """The full, total (19 x 17) rule map loaded from the data file."""
    return _loaded()[0]


def _peer_states() -> frozenset[L2capState]:
    return _loaded()[1]


# Resolved at import so callers can treat it as a constant.
PEER_INITIATED: frozenset[L2capState] = _peer_states()


def step(current: L2capState, event: CommandKind) -> tuple[CommandKind | None, L2capState | None]:
    """Look up (action, next) for an event arriving in a state."""
    rule = transition_table()[(current, event)]
    return rule.action, rule.next_state


def find_path(
    start: L2capState,
    target: L2capState,
    blocked_events: frozenset[CommandKind] = frozenset(),
) -> list[TransitionRule] | None:
    """Shortest event sequence that drives the session start -> target.

    Breadth-first over the table's transition rows, expanding events in
    code order so equal-length paths resolve the same way every run.
    blocked_events removes rows a particular target will not honor
    (for example a device with the move feature disabled).
    """
    if target is start:
        return []
    table = transition_table()
    seen = {start}
    queue: deque[tuple[L2capState, list[TransitionRule]]] = deque([(start, [])])
    while queue:
        state, path = queue.popleft()
        for event in CommandKind:
            if event in blocked_events:
                continue
            rule = table[(state, event)]
            nxt = rule.next_state
            if nxt is None or nxt in seen:
                continue
            hop = path + [rule]
            if nxt is target:
                return hop
            seen.add(nxt)
            queue.append((nxt, hop))
    return None


def reachable_states(
    start: L2capState = L2capState.CLOSED,
    blocked_events: frozenset[CommandKind] = frozenset(),
) -> frozenset[L2capState]:
    """Every state a master-role session can drive the target into."""
    table = transition_table()
    seen = {start}
    queue = deque([start])
    while queue:
        state = queue.popleft()
        for event in CommandKind:
            if event in blocked_events:
                continue
            nxt = table[(state, event)].next_state
            if nxt is not None and nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    return frozenset(seen)


def dump_table() -> str:
    """The raw table file, for review from the CLI."""
    return _table_text()
