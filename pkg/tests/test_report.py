"""Reporting: truncated percentages, metrics table, CSV and figures."""

import csv

import pytest

from l2capfuzz.campaign import run_campaign, CampaignConfig
from l2capfuzz.mutation import MutationConfig
from l2capfuzz.report import build_report, format_metrics_table, truncate_pct, write_csv
from l2capfuzz.transport import SimTransport


@pytest.mark.parametrize(
    "ratio,expected",
    [
        (0.6996, "69.96"),
        (0.3249, "32.49"),
        (0.47229996, "47.22"),  # truncated, not rounded up to 47.23
        (1.0, "100.00"),
        (0.0, "0.00"),
        (0.005, "0.50"),
        (0.12999, "12.99"),
    ],
)
def test_truncate_pct(ratio, expected):
    assert truncate_pct(ratio) == expected


def _synthetic_summary():
    transmitted, malformed = 10_000, 6_996
    received, rejections = 10_000, 3_249
    mp = malformed / transmitted
    pr = rejections / received
    return {
        "scan": {"mac": "08:EF:3B:2A:19:70", "name": "sim-target", "chosen_psm": "0x0001"},
        "mode": "core",
        "seed": 0,
        "metrics": {
            "transmitted": transmitted,
            "malformed": malformed,
            "received": received,
            "rejections": rejections,
            "mp": mp,
            "pr": pr,
            "efficiency": mp * (1 - pr),
        },
        "states_fuzzed": ["CLOSED", "OPEN"],
        "vulnerabilities": [],
        "halted": False,
    }


def test_metrics_table_carries_the_truncated_percentages():
    text = format_metrics_table(_synthetic_summary())
    assert "69.96%" in text
    assert "32.49%" in text
    assert "47.22%" in text
    assert "47.23" not in text
    assert "transmitted" in text
    assert "halted" in text


def _campaign_dir(profile, tmp_path, seed=4, n=6):
    config = CampaignConfig(
        mutation=MutationConfig(seed=seed, n_per_command=n), out_dir=tmp_path
    )
    run_campaign(SimTransport(profile), config)
    return tmp_path


def test_csv_breaks_down_fuzz_packets_by_state(clean_profile, tmp_path):
    from l2capfuzz.campaign import load_log

    out = _campaign_dir(clean_profile, tmp_path)
    rows = load_log(out / "campaign.jsonl")
    path = write_csv(rows, out / "report.csv")
    with path.open() as handle:
        table = list(csv.DictReader(handle))
    states = {entry["state"] for entry in table}
    assert "CLOSED" in states
    assert "OPEN" in states
    fuzz_total = sum(int(entry["packets"]) for entry in table)
    assert fuzz_total == sum(1 for r in rows if r["purpose"] == "fuzz")
    for entry in table:
        verdict_total = sum(
            int(entry[c])
            for c in (
                "accepted",
                "rejected",
                "connection_timeout",
                "connection_failed",
                "connection_refused",
                "connection_reset",
                "connection_aborted",
            )
        )
        assert verdict_total == int(entry["packets"])


def test_build_report_writes_csv_and_three_figures(clean_profile, tmp_path):
    out = _campaign_dir(clean_profile, tmp_path)
    bundle = build_report(out)
    assert bundle.csv_path.exists()
    assert bundle.csv_path.name == "report.csv"
    names = [path.name for path in bundle.figure_paths]
    assert names == ["coverage.png", "ratios.png", "verdicts.png"]
    for path in bundle.figure_paths:
        assert path.exists()
        assert path.stat().st_size > 0
        assert path.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
    assert "malformed-packet ratio" in bundle.text


def test_build_report_can_skip_the_figures(clean_profile, tmp_path):
    out = _campaign_dir(clean_profile, tmp_path)
    bundle = build_report(out, figures=False)
    assert bundle.figure_paths == ()
    assert not (out / "ratios.png").exists()
    assert bundle.csv_path.exists()


def test_report_on_a_halted_campaign_mentions_the_finding(dos_profile, tmp_path):
    config = CampaignConfig(
        mutation=MutationConfig(seed=7, n_per_command=40), out_dir=tmp_path
    )
    run_campaign(SimTransport(dos_profile), config)
    bundle = build_report(tmp_path, figures=False)
    lines = {line.split()[0]: line.split()[-1] for line in bundle.text.splitlines()}
    assert lines["vulnerabilities"] == "1"
    assert lines["halted"] == "true"
    with bundle.csv_path.open() as handle:
        table = {entry["state"]: entry for entry in csv.DictReader(handle)}
    assert int(table["WAIT_CONFIG"]["findings"]) == 1
    assert int(table["WAIT_CONFIG"]["connection_failed"]) == 1
