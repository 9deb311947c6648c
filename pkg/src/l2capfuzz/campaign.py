"""Campaign engine: scan, guide, fuzz, detect, log.

A campaign walks the target's state space job by job.  For every
reachable state it guides the session there, then fires mutated
packets for each command valid in that state's job, classifying every
outcome with the detector below.  Results stream to a JSONL log whose
rows are byte-identical across runs with the same seed (timestamps are
logical sequence numbers; wall-clock figures live only in the summary).

Detection turns one transport outcome into a verdict and a severity:

  reply                       Accepted, or Rejected when the frame is a
                              CommandReject; never a finding by itself
  silence                     echo ping decides: target alive means a
                              plain timeout; dead with a crash dump is
                              a crash; dead without a dump is probed
                              with a fresh connect, where refusal means
                              crashed daemon and no answer at all means
                              silent denial of service
  reset/aborted/refused       connection-level errors, always a crash

Echo pings and connect re-probes are detector overhead and stay out of
the transmission metrics.
"""

from __future__ import annotations

import itertools
import json
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .codec import CommandKind, L2capPacket, decode, encode
from .metrics import CampaignMetrics
from .mutation import MutationConfig, MutationRecord, generate_batch
from .session import FuzzSession
from .simulator import DeviceProfile, L2capDevice
from .states import JOB_ORDER, JOB_STATES, PEER_INITIATED, Job, L2capState, job_of, valid_commands
from .transport import Outcome, SimTransport, Transport

__all__ = [
    "Verdict",
    "Severity",
    "detect",
    "NoReachablePort",
    "ScanReport",
    "scan_target",
    "Vulnerability",
    "CampaignConfig",
    "CampaignResult",
    "run_campaign",
    "load_log",
    "replay_row",
]


class Verdict(Enum):
    ACCEPTED = "accepted"
    REJECTED = "rejected"
    CONNECTION_TIMEOUT = "connection_timeout"
    CONNECTION_FAILED = "connection_failed"
    CONNECTION_REFUSED = "connection_refused"
    CONNECTION_RESET = "connection_reset"
    CONNECTION_ABORTED = "connection_aborted"


class Severity(Enum):
    NONE = "none"
    DOS = "dos"
    CRASH = "crash"


def detect(
    outcome_kind: str,
    *,
    rejected: bool = False,
    ping_ok: bool | None = None,
    dump_present: bool = False,
    reprobe: str | None = None,
) -> tuple[Verdict, Severity]:
    """Map one observed outcome onto (verdict, severity).

    Pure function of its inputs; the campaign gathers ping_ok,
    dump_present and reprobe lazily and only when the cheaper signals
    are ambiguous.  ping_ok None means the ping was not run, which
    downgrades silence to a plain timeout.
    """
    if outcome_kind == "reply":
        if rejected:
            return Verdict.REJECTED, Severity.NONE
        return Verdict.ACCEPTED, Severity.NONE
    if outcome_kind == "silence":
        if ping_ok is None or ping_ok:
            return Verdict.CONNECTION_TIMEOUT, Severity.NONE
        if dump_present:
            return Verdict.CONNECTION_TIMEOUT, Severity.CRASH
        if reprobe == "failed":
            return Verdict.CONNECTION_FAILED, Severity.DOS
        if reprobe == "refused":
            return Verdict.CONNECTION_REFUSED, Severity.CRASH
        return Verdict.CONNECTION_TIMEOUT, Severity.NONE
    if outcome_kind == "reset":
        return Verdict.CONNECTION_RESET, Severity.CRASH
    if outcome_kind == "aborted":
        return Verdict.CONNECTION_ABORTED, Severity.CRASH
    if outcome_kind == "refused":
        return Verdict.CONNECTION_REFUSED, Severity.CRASH
    raise ValueError(f"unknown outcome kind {outcome_kind!r}")


class NoReachablePort(RuntimeError):
    """Scanning found no service port that accepts a plain connect."""


@dataclass(frozen=True)
class ScanReport:
    mac: str
    name: str
    device_class: int
    oui: str
    probes: tuple[tuple[int, str, str], ...]  # (psm, port name, probe result)
    chosen_psm: int

    def as_dict(self) -> dict:
        return {
            "mac": self.mac,
            "name": self.name,
            "device_class": f"0x{self.device_class:06X}",
            "oui": self.oui,
            "probes": [
                {"psm": f"0x{psm:04X}", "name": name, "result": result}
                for psm, name, result in self.probes
            ],
            "chosen_psm": f"0x{self.chosen_psm:04X}",
        }


def scan_target(transport: Transport, metrics: CampaignMetrics | None = None) -> ScanReport:
    """Inventory the target and pick the fuzzing entry port.

    Every advertised port is probed with a plain connect; the first one
    that accepts without pairing becomes the session's PSM.  Probes
    count as transmitted packets, their answers as received frames.
    """
    info = transport.scan_info()
    probes: list[tuple[int, str, str]] = []
    chosen: int | None = None
    for port in transport.list_ports():
        result = transport.probe_connect(port.psm)
        if metrics is not None:
            metrics.count_sent(malformed=False, purpose="scan")
            metrics.count_outcome("reply" if result in ("ok", "refused") else "silence")
        probes.append((port.psm, port.name, result))
        if result == "ok" and chosen is None:
            chosen = port.psm
    if chosen is None:
        raise NoReachablePort(
            f"no pairing-free service port on {info.mac}; "
            f"probed {len(probes)} advertised ports"
        )
    return ScanReport(
        mac=info.mac,
        name=info.name,
        device_class=info.device_class,
        oui=info.oui,
        probes=tuple(probes),
        chosen_psm=chosen,
    )


@dataclass(frozen=True)
class Vulnerability:
    ts: int
    state: L2capState
    job: Job
    command: CommandKind
    verdict: Verdict
    severity: Severity
    wire: bytes
    identifier: int
    mutated_fields: tuple[tuple[str, object, object], ...]
    dump: str | None

    def as_dict(self) -> dict:
        return {
            "ts": self.ts,
            "state": self.state.name,
            "job": self.job.name,
            "command": self.command.wire_name,
            "verdict": self.verdict.value,
            "severity": self.severity.value,
            "wire": self.wire.hex(),
            "identifier": self.identifier,
            "mutated_fields": [list(entry) for entry in self.mutated_fields],
            "dump": self.dump,
        }


@dataclass(frozen=True)
class CampaignConfig:
    mutation: MutationConfig = MutationConfig()
    mode: str = "core"  # "core" or "baseline"
    states: tuple[L2capState, ...] | None = None
    continue_after_reset: bool = False
    max_packets: int | None = None
    out_dir: Path | None = None
    log_name: str = "campaign.jsonl"
    summary_name: str = "summary.json"

    def __post_init__(self) -> None:
        if self.mode not in ("core", "baseline"):
            raise ValueError(f"unknown mode {self.mode!r}")


@dataclass
class CampaignResult:
    scan: ScanReport
    metrics: CampaignMetrics
    vulnerabilities: list[Vulnerability]
    states_fuzzed: list[L2capState]
    unreachable: dict[L2capState, str]
    halted: bool
    wall_seconds: float
    rows: list[dict]
    log_path: Path | None
    summary_path: Path | None
    summary: dict

    @property
    def found_vulnerability(self) -> bool:
        return bool(self.vulnerabilities)


class _Stop(Exception):
    """Internal control flow: campaign must end now."""

    def __init__(self, halted: bool):
        self.halted = halted


class _NextState(Exception):
    """Internal control flow: abandon the current state."""


def _reject_info(outcome: Outcome) -> tuple[bool, int | None]:
    if not outcome.is_reply:
        return False, None
    try:
        reply = decode(outcome.payload)
    except Exception:
        return False, None
    if reply.kind is CommandKind.COMMAND_REJECT:
        reason = reply.field("reason")
        return True, reason if isinstance(reason, int) else None
    return False, None


class _Runner:
    def __init__(self, transport: Transport, config: CampaignConfig):
        self.transport = transport
        self.config = config
        self.metrics = CampaignMetrics()
        self.rows: list[dict] = []
        self.vulnerabilities: list[Vulnerability] = []
        self.states_fuzzed: list[L2capState] = []
        self.unreachable: dict[L2capState, str] = {}
        self.ts = itertools.count()
        self.rng = config.mutation.rng()
        self._log_handle = None
        self.log_path: Path | None = None
        self.summary_path: Path | None = None
        if config.out_dir is not None:
            config.out_dir.mkdir(parents=True, exist_ok=True)
            self.log_path = config.out_dir / config.log_name
            self.summary_path = config.out_dir / config.summary_name
            self._log_handle = self.log_path.open("w")

    # -- logging -------------------------------------------------------

    def _emit(self, row: dict) -> None:
        self.rows.append(row)
        if self._log_handle is not None:
            self._log_handle.write(json.dumps(row, sort_keys=True, separators=(",", ":")))
            self._log_handle.write("\n")

    def _row(
        self,
        *,
        purpose: str,
        state: L2capState,
        command: CommandKind,
        identifier: int,
        wire: bytes,
        outcome: Outcome,
        verdict: Verdict,
        severity: Severity,
        reject_reason: int | None,
        malformed: bool,
        mutated: tuple = (),
        dump: str | None = None,
    ) -> dict:
        return {
            "ts": next(self.ts),
            "purpose": purpose,
            "mode": self.config.mode,
            "state": state.name,
            "job": job_of(state).name,
            "command": command.wire_name,
            "identifier": identifier,
            "malformed": malformed,
            "mutated": [[name, repr(old), repr(new)] for name, old, new in mutated],
            "wire": wire.hex(),
            "outcome": outcome.kind,
            "reply": outcome.payload.hex() if outcome.is_reply else None,
            "verdict": verdict.value,
            "severity": severity.value,
            "reject_reason": reject_reason,
            "dump": dump,
        }

    # -- guide observer ---------------------------------------------------

    def observe_guide(self, frame: bytes, outcome: Outcome, command: CommandKind, purpose: str) -> None:
        state = self.session.state  # pre-hop state, guide confirms after
        self.metrics.count_sent(malformed=False, purpose=purpose)
        rejected, reason = _reject_info(outcome)
        self.metrics.count_outcome(outcome.kind, rejected=rejected)
        verdict, severity = detect(outcome.kind, rejected=rejected)
        frame_packet = decode(frame)
        self._emit(
            self._row(
                purpose=purpose,
                state=state,
                command=command,
                identifier=frame_packet.identifier,
                wire=frame,
                outcome=outcome,
                verdict=verdict,
                severity=severity,
                reject_reason=reason,
                malformed=False,
            )
        )

    # -- fuzzing -------------------------------------------------------------

    def run(self) -> CampaignResult:
        t0 = time.perf_counter()
        halted = False
        scan = scan_target(self.transport, self.metrics)
        self.session = FuzzSession(
            self.transport, psm=scan.chosen_psm, observer=self.observe_guide
        )
        try:
            for job in JOB_ORDER:
                for state in JOB_STATES[job]:
                    if self.config.states is not None and state not in self.config.states:
                        continue
                    self._visit(job, state)
        except _Stop as stop:
            halted = stop.halted
        finally:
            if self._log_handle is not None:
                self._log_handle.close()
                self._log_handle = None

        wall = time.perf_counter() - t0
        summary = self._summary(scan, halted, wall)
        if self.summary_path is not None:
            self.summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
        return CampaignResult(
            scan=scan,
            metrics=self.metrics,
            vulnerabilities=self.vulnerabilities,
            states_fuzzed=self.states_fuzzed,
            unreachable=self.unreachable,
            halted=halted,
            wall_seconds=wall,
            rows=self.rows,
            log_path=self.log_path,
            summary_path=self.summary_path,
            summary=summary,
        )

    def _visit(self, job: Job, state: L2capState) -> None:
        if state in PEER_INITIATED:
            self.unreachable[state] = "peer_initiated"
            return
        guide = self.session.guide_to(state)
        if not guide:
            self.unreachable[state] = guide.reason
            return
        self.states_fuzzed.append(state)
        self.metrics.states_covered.add(state.name)
        try:
            for command in sorted(valid_commands(job)):
                records = generate_batch(
                    [command],
                    self.config.mutation,
                    rng=self.rng,
                    ids=self.session.ids,
                    mode=self.config.mode,
                )
                for record in records:
                    self._fire(job, state, record)
        except _NextState:
            return

    def _fire(self, job: Job, state: L2capState, record: MutationRecord) -> None:
        if (
            self.config.max_packets is not None
            and self.metrics.fuzz_packets >= self.config.max_packets
        ):
            raise _Stop(halted=False)
        if self.session.state is not state:
            # A previous mutant moved the target; walk back first.
            back = self.session.guide_to(state)
            if not back:
                raise _NextState()

        outcome = self.transport.exchange(record.wire)
        self.metrics.count_sent(malformed=record.changed_anything(), purpose="fuzz")
        rejected, reason = _reject_info(outcome)
        self.metrics.count_outcome(outcome.kind, rejected=rejected)

        ping_ok: bool | None = None
        dump_present = False
        reprobe: str | None = None
        if outcome.kind == "silence":
            ping_ok = self.transport.ping()
            if not ping_ok:
                dump_present = self.transport.crash_dump_present()
                if not dump_present:
                    reprobe = self.transport.probe_connect(self.session.psm)
        elif outcome.is_error:
            dump_present = self.transport.crash_dump_present()

        verdict, severity = detect(
            outcome.kind,
            rejected=rejected,
            ping_ok=ping_ok,
            dump_present=dump_present,
            reprobe=reprobe,
        )

        dump_name = self._dump_name() if dump_present else None
        self._emit(
            self._row(
                purpose="fuzz",
                state=state,
                command=record.kind,
                identifier=record.identifier,
                wire=record.wire,
                outcome=outcome,
                verdict=verdict,
                severity=severity,
                reject_reason=reason,
                malformed=record.changed_anything(),
                mutated=record.mutated_fields,
                dump=dump_name,
            )
        )
        self.session.settle(record.wire, outcome)

        if severity is not Severity.NONE:
            self.vulnerabilities.append(
                Vulnerability(
                    ts=self.rows[-1]["ts"],
                    state=state,
                    job=job,
                    command=record.kind,
                    verdict=verdict,
                    severity=severity,
                    wire=record.wire,
                    identifier=record.identifier,
                    mutated_fields=record.mutated_fields,
                    dump=dump_name,
                )
            )
            if not self.config.continue_after_reset:
                raise _Stop(halted=True)
            self.transport.reset_target()
            self.metrics.resets += 1
            self.session.restart()
            raise _NextState()

    def _dump_name(self) -> str | None:
        device = getattr(self.transport, "device", None)
        if isinstance(device, L2capDevice) and device.crash_dumps:
            return device.crash_dumps[-1].name
        return "present"

    def _summary(self, scan: ScanReport, halted: bool, wall: float) -> dict:
        pps = self.metrics.transmitted / wall if wall > 0 else 0.0
        return {
            "scan": scan.as_dict(),
            "mode": self.config.mode,
            "seed": self.config.mutation.seed,
            "n_per_command": self.config.mutation.n_per_command,
            "metrics": self.metrics.as_dict(),
            "states_fuzzed": [state.name for state in self.states_fuzzed],
            "unreachable": {state.name: why for state, why in self.unreachable.items()},
            "vulnerabilities": [vuln.as_dict() for vuln in self.vulnerabilities],
            "halted": halted,
            "wall_seconds": wall,
            "packets_per_second": pps,
        }


def run_campaign(transport: Transport, config: CampaignConfig | None = None) -> CampaignResult:
    """Scan the target, fuzz every reachable state, return the record."""
    return _Runner(transport, config or CampaignConfig()).run()


# -- replay ------------------------------------------------------------------


def load_log(path: str | Path) -> list[dict]:
    rows = []
    with Path(path).open() as handle:
        for line in handle:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows


def replay_row(
    row: dict,
    profile: DeviceProfile,
    *,
    workdir: str | Path | None = None,
) -> dict:
    """Re-send one logged packet against a fresh target.

    The device is primed into the state the log recorded, with the
    standard session channel, so a deterministic trigger reproduces the
    same verdict.  Returns the new classification next to the logged
    one.
    """
    transport = SimTransport(profile, workdir=workdir)
    state = L2capState[row["state"]]
    transport.device.prime(state)
    wire = bytes.fromhex(row["wire"])
    outcome = transport.exchange(wire)
    rejected, reason = _reject_info(outcome)

    ping_ok: bool | None = None
    dump_present = False
    reprobe: str | None = None
    if outcome.kind == "silence":
        ping_ok = transport.ping()
        if not ping_ok:
            dump_present = transport.crash_dump_present()
            if not dump_present:
                ports = [p for p in profile.ports if not p.requires_pairing]
                reprobe = transport.probe_connect(ports[0].psm if ports else 0x0001)
    elif outcome.is_error:
        dump_present = transport.crash_dump_present()

    verdict, severity = detect(
        outcome.kind,
        rejected=rejected,
        ping_ok=ping_ok,
        dump_present=dump_present,
        reprobe=reprobe,
    )
    return {
        "state": state.name,
        "command": row.get("command"),
        "wire": row["wire"],
        "logged_verdict": row.get("verdict"),
        "logged_severity": row.get("severity"),
        "verdict": verdict.value,
        "severity": severity.value,
        "reject_reason": reason,
        "outcome": outcome.kind,
        "reproduced": row.get("verdict") == verdict.value
        and row.get("severity") == severity.value,
        "state_after": transport.device.state.name,
    }
