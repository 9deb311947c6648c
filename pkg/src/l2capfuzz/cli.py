"""Command line entry points.

    l2capfuzz scan        inventory the target and pick the entry port
    l2capfuzz fuzz        run a fuzzing campaign, write log + summary
    l2capfuzz replay      re-send one logged packet against a fresh target
    l2capfuzz report      metrics table, CSV and figures from an output dir
    l2capfuzz dump-table  print the transition table the tools share

Exit codes: 0 clean, 1 a vulnerability was found (fuzz/replay), 2
configuration or transport trouble.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .campaign import (
    CampaignConfig,
    NoReachablePort,
    load_log,
    replay_row,
    run_campaign,
    scan_target,
)
from .mutation import MutationConfig
from .profiles import ConfigError, builtin_names, load_config, resolve_profile
from .report import build_report
from .simulator import DeviceProfile
from .states import L2capState, dump_table
from .transport import (
    HciTransport,
    SimTransport,
    Transport,
    TransportUnavailable,
    UdpLoopbackTransport,
)

__all__ = ["main"]


def _add_profile_arg(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--profile",
        default="default",
        help=f"builtin profile ({', '.join(builtin_names())}) or a .toml path",
    )


def _add_transport_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--transport",
        choices=("sim", "udp", "hci"),
        default="sim",
        help="sim: in-process target; udp: localhost datagram loopback; "
        "hci: raw socket to hardware (unavailable in a sandbox)",
    )
    parser.add_argument(
        "--acl-framing",
        action="store_true",
        help="wrap frames in the 4-byte ACL prologue (sim transport only)",
    )
    parser.add_argument("--adapter", default="hci0", help="HCI adapter name")


def _make_transport(args: argparse.Namespace, profile: DeviceProfile, workdir: Path | None) -> Transport:
    if args.transport == "sim":
        return SimTransport(profile, workdir=workdir, acl_framing=args.acl_framing)
    if args.transport == "udp":
        return UdpLoopbackTransport(profile, workdir=workdir)
    return HciTransport(args.adapter)


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="l2capfuzz",
        description="stateful L2CAP signaling fuzzer with a simulated target",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    scan = sub.add_parser("scan", help="probe the target's service ports")
    _add_profile_arg(scan)
    _add_transport_args(scan)
    scan.add_argument("--json", action="store_true", help="machine-readable output")

    fuzz = sub.add_parser("fuzz", help="run a fuzzing campaign")
    _add_profile_arg(fuzz)
    _add_transport_args(fuzz)
    fuzz.add_argument("--config", help="TOML file with device/mutation/campaign sections")
    fuzz.add_argument("--seed", type=int, default=None, help="mutation RNG seed (default 0)")
    fuzz.add_argument(
        "--n-per-command", type=int, default=None, help="mutants per command per state (default 1000)"
    )
    fuzz.add_argument("--mtu", type=int, default=None, help="signaling MTU assumed for mutants")
    fuzz.add_argument("--garbage-max", type=int, default=None, help="max trailing garbage bytes")
    fuzz.add_argument("--mode", choices=("core", "baseline"), default=None)
    fuzz.add_argument(
        "--states",
        default=None,
        help="comma-separated state names to fuzz (default: every reachable state)",
    )
    fuzz.add_argument(
        "--continue-after-reset",
        action="store_true",
        help="reset the target after a finding and keep fuzzing",
    )
    fuzz.add_argument("--max-packets", type=int, default=None, help="fuzz packet budget")
    fuzz.add_argument(
        "--out", default="l2capfuzz-out", help="output directory for log, summary and dumps"
    )
    fuzz.add_argument("--quiet", action="store_true", help="suppress progress lines")

    replay = sub.add_parser("replay", help="re-send one packet from a campaign log")
    replay.add_argument("log", help="campaign.jsonl from a previous run")
    _add_profile_arg(replay)
    replay.add_argument(
        "--index",
        type=int,
        default=-1,
        help="row to replay, negative counts from the end (default -1, the last row)",
    )
    replay.add_argument("--json", action="store_true")

    report = sub.add_parser("report", help="render metrics, CSV and figures")
    report.add_argument("out_dir", help="directory a fuzz run wrote into")
    report.add_argument("--no-figures", action="store_true", help="skip PNG rendering")

    sub.add_parser("dump-table", help="print the transition table")

    return parser


def _cmd_scan(args: argparse.Namespace) -> int:
    profile = resolve_profile(args.profile)
    transport = _make_transport(args, profile, workdir=None)
    try:
        scan = scan_target(transport)
    finally:
        transport.close()
    if args.json:
        print(json.dumps(scan.as_dict(), indent=2, sort_keys=True))
        return 0
    print(f"target      {scan.mac} ({scan.name})")
    print(f"class       0x{scan.device_class:06X}")
    print(f"oui         {scan.oui}")
    for psm, name, result in scan.probes:
        print(f"port 0x{psm:04X}  {name or '-':<12} {result}")
    print(f"entry port  0x{scan.chosen_psm:04X}")
    return 0


def _campaign_config(args: argparse.Namespace, out_dir: Path) -> tuple[DeviceProfile, CampaignConfig]:
    if args.config:
        loaded = load_config(args.config, out_dir=out_dir)
        profile = loaded.profile
        base = loaded.campaign
    else:
        profile = resolve_profile(args.profile)
        base = CampaignConfig(out_dir=out_dir)

    mutation = base.mutation
    mutation = MutationConfig(
        seed=args.seed if args.seed is not None else mutation.seed,
        n_per_command=(
            args.n_per_command if args.n_per_command is not None else mutation.n_per_command
        ),
        mtu=args.mtu if args.mtu is not None else mutation.mtu,
        garbage_max=(
            args.garbage_max if args.garbage_max is not None else mutation.garbage_max
        ),
        cid_range=mutation.cid_range,
        psm_ranges=mutation.psm_ranges,
    )
    states = base.states
    if args.states is not None:
        try:
            states = tuple(
                L2capState[token.strip().upper()] for token in args.states.split(",") if token.strip()
            )
        except KeyError as bad:
            raise ConfigError(f"unknown state {bad.args[0]!r}") from None
    config = CampaignConfig(
        mutation=mutation,
        mode=args.mode if args.mode is not None else base.mode,
        states=states,
        continue_after_reset=args.continue_after_reset or base.continue_after_reset,
        max_packets=args.max_packets if args.max_packets is not None else base.max_packets,
        out_dir=out_dir,
        log_name=base.log_name,
        summary_name=base.summary_name,
    )
    return profile, config


def _cmd_fuzz(args: argparse.Namespace) -> int:
    out_dir = Path(args.out)
    profile, config = _campaign_config(args, out_dir)
    transport = _make_transport(args, profile, workdir=out_dir / "dumps")
    try:
        result = run_campaign(transport, config)
    finally:
        transport.close()

    if not args.quiet:
        print(f"scanned {result.scan.mac}, entry port 0x{result.scan.chosen_psm:04X}")
        for state in result.states_fuzzed:
            print(f"fuzzed {state.name}")
        for state, why in result.unreachable.items():
            print(f"skipped {state.name}: {why}")
        print()
    from .report import format_metrics_table

    print(format_metrics_table(result.summary))
    for vuln in result.vulnerabilities:
        print(
            f"finding: {vuln.severity.value} in {vuln.state.name} "
            f"via {vuln.command.wire_name} (verdict {vuln.verdict.value}, ts {vuln.ts})"
        )
        if vuln.dump:
            print(f"  crash dump: {vuln.dump}")
    if result.log_path:
        print(f"log:     {result.log_path}")
    if result.summary_path:
        print(f"summary: {result.summary_path}")
    return 1 if result.found_vulnerability else 0


def _cmd_replay(args: argparse.Namespace) -> int:
    rows = load_log(args.log)
    if not rows:
        print("log is empty", file=sys.stderr)
        return 2
    try:
        row = rows[args.index]
    except IndexError:
        print(f"index {args.index} out of range for {len(rows)} rows", file=sys.stderr)
        return 2
    profile = resolve_profile(args.profile)
    outcome = replay_row(row, profile)
    if args.json:
        print(json.dumps(outcome, indent=2, sort_keys=True))
    else:
        print(f"state    {outcome['state']}")
        print(f"command  {outcome['command']}")
        print(f"logged   {outcome['logged_verdict']} / {outcome['logged_severity']}")
        print(f"replayed {outcome['verdict']} / {outcome['severity']}")
        print(f"reproduced: {str(outcome['reproduced']).lower()}")
    return 1 if outcome["severity"] != "none" else 0


def _cmd_report(args: argparse.Namespace) -> int:
    bundle = build_report(args.out_dir, figures=not args.no_figures)
    print(bundle.text)
    print()
    print(f"csv: {bundle.csv_path}")
    for figure in bundle.figure_paths:
        print(f"figure: {figure}")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "scan":
            return _cmd_scan(args)
        if args.command == "fuzz":
            return _cmd_fuzz(args)
        if args.command == "replay":
            return _cmd_replay(args)
        if args.command == "report":
            return _cmd_report(args)
        if args.command == "dump-table":
            print(dump_table(), end="")
            return 0
    except (ConfigError, NoReachablePort, TransportUnavailable) as trouble:
        print(f"error: {trouble}", file=sys.stderr)
        return 2
    except FileNotFoundError as missing:
        print(f"error: {missing}", file=sys.stderr)
        return 2
    raise AssertionError(f"unhandled subcommand {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())
