"""Campaign reporting: metrics table, CSV breakdown, figures.

Percentages are truncated, not rounded, to two decimals: a campaign
at efficiency 0.47229996 reports 47.22%, never 47.23%.  Rounding up
would overstate the one number this tool exists to measure.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from decimal import ROUND_DOWN, Decimal
from pathlib import Path

from .metrics import mutation_efficiency

__all__ = [
    "truncate_pct",
    "format_metrics_table",
    "write_csv",
    "render_figures",
    "ReportBundle",
    "build_report",
]

_VERDICT_COLUMNS = (
    "accepted",
    "rejected",
    "connection_timeout",
    "connection_failed",
    "connection_refused",
    "connection_reset",
    "connection_aborted",
)


def truncate_pct(ratio: float) -> str:
    """0.47229996 -> '47.22'; truncation keeps claims conservative."""
    scaled = Decimal(str(ratio)) * 100
    return str(scaled.quantize(Decimal("0.01"), rounding=ROUND_DOWN))


def format_metrics_table(summary: dict) -> str:
    """Human-readable closing table for one campaign summary."""
    metrics = summary["metrics"]
    mp = metrics["mp"]
    pr = metrics["pr"]
    efficiency = metrics.get("efficiency", mutation_efficiency(mp, pr))
    scan = summary.get("scan", {})
    lines = [
        ("target", f"{scan.get('mac', '?')} ({scan.get('name', '?')})"),
        ("entry port", str(scan.get("chosen_psm", "?"))),
        ("mode", str(summary.get("mode", "?"))),
        ("seed", str(summary.get("seed", "?"))),
        ("transmitted", str(metrics["transmitted"])),
        ("malformed", str(metrics["malformed"])),
        ("received", str(metrics["received"])),
        ("rejections", str(metrics["rejections"])),
        ("malformed-packet ratio", f"{truncate_pct(mp)}%"),
        ("packet-rejection ratio", f"{truncate_pct(pr)}%"),
        ("mutation efficiency", f"{truncate_pct(efficiency)}%"),
        ("states fuzzed", str(len(summary.get("states_fuzzed", [])))),
        ("vulnerabilities", str(len(summary.get("vulnerabilities", [])))),
        ("halted", str(summary.get("halted", False)).lower()),
    ]
    width = max(len(label) for label, _ in lines)
    return "\n".join(f"{label.ljust(width)}  {value}" for label, value in lines)


def _state_breakdown(rows: list[dict]) -> dict[str, dict]:
    """Per-state verdict counts over the fuzz rows of a log."""
    breakdown: dict[str, dict] = {}
    for row in rows:
        if row.get("purpose") != "fuzz":
            continue
        entry = breakdown.setdefault(
            row["state"],
            {"job": row["job"], "packets": 0, "findings": 0}
            | {column: 0 for column in _VERDICT_COLUMNS},
        )
        entry["packets"] += 1
        verdict = row.get("verdict")
        if verdict in entry:
            entry[verdict] += 1
        if row.get("severity") not in (None, "none"):
            entry["findings"] += 1
    return breakdown


def write_csv(rows: list[dict], path: Path) -> Path:
    """Delimited per-state breakdown next to the figures."""
    breakdown = _state_breakdown(rows)
    fieldnames = ["state", "job", "packets", *_VERDICT_COLUMNS, "findings"]
    with path.open("w", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=fieldnames)
        writer.writeheader()
        for state, entry in breakdown.items():
            writer.writerow({"state": state, **entry})
    return path


def render_figures(rows: list[dict], summary: dict, out_dir: Path) -> list[Path]:
    """Coverage, ratio and verdict charts as PNG files."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    breakdown = _state_breakdown(rows)

    # Packets per state, with unreachable states flagged at zero.
    fig, ax = plt.subplots(figsize=(9, 5))
    states = list(breakdown)
    counts = [breakdown[state]["packets"] for state in states]
    unreachable = list(summary.get("unreachable", {}))
    ax.barh(states + unreachable, counts + [0] * len(unreachable), color="#4878a8")
    for index, state in enumerate(unreachable):
        reason = summary["unreachable"][state]
        ax.text(1, len(states) + index, f"unreachable ({reason})", va="center", fontsize=8)
    ax.set_xlabel("fuzz packets")
    ax.set_title("state coverage")
    ax.invert_yaxis()
    fig.tight_layout()
    coverage = out_dir / "coverage.png"
    fig.savefig(coverage, dpi=110)
    plt.close(fig)
    written.append(coverage)

    # The three campaign ratios.
    metrics = summary["metrics"]
    fig, ax = plt.subplots(figsize=(5, 4))
    names = ["MP", "PR", "efficiency"]
    values = [metrics["mp"], metrics["pr"], metrics["efficiency"]]
    bars = ax.bar(names, values, color=["#4878a8", "#a85448", "#48a868"])
    for bar, value in zip(bars, values):
        ax.text(
            bar.get_x() + bar.get_width() / 2,
            value,
            f"{truncate_pct(value)}%",
            ha="center",
            va="bottom",
        )
    ax.set_ylim(0, 1.08)
    ax.set_title("mutation quality")
    fig.tight_layout()
    ratios = out_dir / "ratios.png"
    fig.savefig(ratios, dpi=110)
    plt.close(fig)
    written.append(ratios)

    # Verdict distribution over all fuzz packets.
    totals = {column: 0 for column in _VERDICT_COLUMNS}
    for entry in breakdown.values():
        for column in _VERDICT_COLUMNS:
            totals[column] += entry[column]
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.bar(list(totals), list(totals.values()), color="#4878a8")
    ax.set_ylabel("packets")
    ax.set_title("verdicts")
    ax.tick_params(axis="x", rotation=30)
    fig.tight_layout()
    verdicts = out_dir / "verdicts.png"
    fig.savefig(verdicts, dpi=110)
    plt.close(fig)
    written.append(verdicts)

    return written


@dataclass(frozen=True)
class ReportBundle:
    text: str
    csv_path: Path
    figure_paths: tuple[Path, ...]


def build_report(out_dir: str | Path, *, figures: bool = True) -> ReportBundle:
    """Render everything from a campaign output directory.

    Expects the campaign's campaign.jsonl and summary.json; writes
    report.csv and the PNG figures alongside them.
    """
    out_dir = Path(out_dir)
    summary = json.loads((out_dir / "summary.json").read_text())
    rows = []
    log = out_dir / "campaign.jsonl"
    if log.exists():
        with log.open() as handle:
            rows = [json.loads(line) for line in handle if line.strip()]
    csv_path = write_csv(rows, out_dir / "report.csv")
    figure_paths: tuple[Path, ...] = ()
    if figures:
        figure_paths = tuple(render_figures(rows, summary, out_dir))
    return ReportBundle(
        text=format_metrics_table(summary),
        csv_path=csv_path,
        figure_paths=figure_paths,
    )
