"""Campaign quality metrics.

Three ratios summarize how sharp a mutation strategy is:

  malformed-packet ratio   MP  = malformed transmitted / transmitted
  packet-rejection ratio   PR  = rejections received / frames received
  mutation efficiency      E   = MP * (1 - PR)

A strategy earns efficiency by sending packets that are genuinely
malformed yet still get past the target's validity filter, which is
the population that exercises code behind the parser.  Zero
denominators yield zero ratios so the numbers stay total.

Counting rules: transmitted covers scan probes, guide packets and
fuzz packets, in other words everything the campaign aims at the
target on purpose.  Health checks the detector runs to classify an
outcome (echo pings, connect re-probes) are excluded from both
directions, otherwise detection work would dilute the ratios it is
supposed to explain.
"""

from __future__ import annotations

from dataclasses import dataclass, field

__all__ = [
    "mp_ratio",
    "pr_ratio",
    "mutation_efficiency",
    "CampaignMetrics",
]


def mp_ratio(malformed: int, transmitted: int) -> float:
    """Share of transmitted packets that were actually malformed."""
    if transmitted <= 0:
        return 0.0
    return malformed / transmitted


def pr_ratio(rejections: int, received: int) -> float:
    """Share of received frames that were command rejects."""
    if received <= 0:
        return 0.0
    return rejections / received


def mutation_efficiency(mp: float, pr: float) -> float:
    """Malformed share surviving rejection: MP * (1 - PR)."""
    return mp * (1.0 - pr)


@dataclass
class CampaignMetrics:
    """Running counters for one fuzzing campaign."""

    transmitted: int = 0
    malformed: int = 0
    received: int = 0
    rejections: int = 0
    silences: int = 0
    transport_errors: int = 0
    fuzz_packets: int = 0
    guide_packets: int = 0
    scan_probes: int = 0
    resets: int = 0
    states_covered: set[str] = field(default_factory=set)

    @property
    def mp(self) -> float:
        return mp_ratio(self.malformed, self.transmitted)

    @property
    def pr(self) -> float:
        return pr_ratio(self.rejections, self.received)

    @property
    def efficiency(self) -> float:
        return mutation_efficiency(self.mp, self.pr)

    def count_sent(self, *, malformed: bool, purpose: str) -> None:
        self.transmitted += 1
        if malformed:
            self.malformed += 1
        if purpose == "fuzz":
            self.fuzz_packets += 1
        elif purpose == "guide":
            self.guide_packets += 1
        elif purpose == "scan":
            self.scan_probes += 1

    def count_outcome(self, kind: str, *, rejected: bool = False) -> None:
        if kind == "reply":
            self.received += 1
            if rejected:
                self.rejections += 1
        elif kind == "silence":
            self.silences += 1
        else:
            self.transport_errors += 1

    def as_dict(self) -> dict:
        return {
            "transmitted": self.transmitted,
            "malformed": self.malformed,
            "received": self.received,
            "rejections": self.rejections,
            "silences": self.silences,
            "transport_errors": self.transport_errors,
            "fuzz_packets": self.fuzz_packets,
            "guide_packets": self.guide_packets,
            "scan_probes": self.scan_probes,
            "resets": self.resets,
            "states_covered": sorted(self.states_covered),
            "mp": self.mp,
            "pr": self.pr,
            "efficiency": self.efficiency,
        }
