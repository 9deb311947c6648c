"""Device and campaign configuration, built in or loaded from TOML.

A config file describes the simulated target (identity, service ports,
strictness, seeded bugs) and optionally the mutation and campaign
knobs, all in one document:

    [device]
    mac = "08:EF:3B:2A:19:70"
    name = "headset"
    strictness = "strict"
    mtu = 672
    max_channels = 8
    disabled_jobs = []

    [[device.ports]]
    psm = 0x0001
    name = "sdp"

    [[bugs]]
    job = "CONFIGURATION"
    command = "config_req"
    symptom = "dos"
    garbage = "non_empty"

    [[bugs.conditions]]
    field = "dcid"
    op = "ne"
    value = 0x0040

    [mutation]
    seed = 0
    n_per_command = 1000

    [campaign]
    mode = "core"
    continue_after_reset = false

Builtin profiles cover the common cases so the CLI works out of the
box; pass a name from builtin_names() or a path to a .toml file.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, replace
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .campaign import CampaignConfig
from .codec import CommandKind
from .mutation import MutationConfig
from .simulator import BugProfile, DeviceProfile, FieldCondition, ServicePort, Strictness
from .states import Job, L2capState

__all__ = [
    "ConfigError",
    "LoadedConfig",
    "builtin_names",
    "builtin_profile",
    "load_config",
    "resolve_profile",
]


class ConfigError(ValueError):
    """The configuration file cannot produce a runnable campaign."""


@dataclass(frozen=True)
class LoadedConfig:
    profile: DeviceProfile
    campaign: CampaignConfig


_WIRE_NAMES = {kind.wire_name: kind for kind in CommandKind}

_STANDARD_PORTS = (
    ServicePort(0x0001, "sdp"),
    ServicePort(0x0003, "rfcomm"),
    ServicePort(0x0019, "avdtp"),
    ServicePort(0x0011, "hid-control", requires_pairing=True),
)

_DOS_BUG = BugProfile(
    job=Job.CONFIGURATION,
    command=CommandKind.CONFIG_REQ,
    symptom="dos",
    conditions=(FieldCondition("dcid", "ne", 0x0040),),
    garbage="non_empty",
    name="config-walk-stall",
)

_CRASH_BUG = BugProfile(
    job=Job.CREATION,
    command=CommandKind.CREATE_CHANNEL_REQ,
    symptom="crash",
    garbage="non_empty",
    manifestation="reset",
    name="create-parse-overrun",
)


def _builtins() -> dict[str, DeviceProfile]:
    return {
        "default": DeviceProfile(ports=_STANDARD_PORTS, bugs=(_DOS_BUG, _CRASH_BUG)),
        "clean": DeviceProfile(ports=_STANDARD_PORTS),
        "lenient": DeviceProfile(ports=_STANDARD_PORTS, strictness=Strictness.LENIENT),
        "dos": DeviceProfile(ports=_STANDARD_PORTS, bugs=(_DOS_BUG,)),
        "crash": DeviceProfile(ports=_STANDARD_PORTS, bugs=(_CRASH_BUG,)),
        "no-move": DeviceProfile(
            ports=_STANDARD_PORTS, disabled_jobs=frozenset({Job.MOVE})
        ),
    }


def builtin_names() -> tuple[str, ...]:
    return tuple(_builtins())


def builtin_profile(name: str) -> DeviceProfile:
    try:
        return _builtins()[name]
    except KeyError:
        raise ConfigError(
            f"unknown builtin profile {name!r}; available: {', '.join(builtin_names())}"
        ) from None


def _parse_command(raw: str) -> CommandKind:
    key = raw.strip().lower()
    if key in _WIRE_NAMES:
        return _WIRE_NAMES[key]
    try:
        return CommandKind[raw.strip().upper()]
    except KeyError:
        raise ConfigError(f"unknown command {raw!r}") from None


def _parse_job(raw: str) -> Job:
    try:
        return Job[raw.strip().upper()]
    except KeyError:
        raise ConfigError(f"unknown job {raw!r}") from None


def _parse_state(raw: str) -> L2capState:
    try:
        return L2capState[raw.strip().upper()]
    except KeyError:
        raise ConfigError(f"unknown state {raw!r}") from None


def _parse_condition(raw: dict) -> FieldCondition:
    try:
        fieldname = raw["field"]
        op = raw["op"]
        value = raw["value"]
    except KeyError as missing:
        raise ConfigError(f"bug condition missing key {missing}") from None
    if op == "between":
        if not (isinstance(value, list) and len(value) == 2):
            raise ConfigError("between takes a two-element [lo, hi] value")
        value = (int(value[0]), int(value[1]))
    elif not isinstance(value, int):
        raise ConfigError(f"condition value for {op!r} must be an integer")
    if op not in ("eq", "ne", "lt", "le", "gt", "ge", "between"):
        raise ConfigError(f"unknown condition op {op!r}")
    return FieldCondition(str(fieldname), str(op), value)


def _parse_bug(raw: dict) -> BugProfile:
    try:
        return BugProfile(
            job=_parse_job(raw["job"]),
            command=_parse_command(raw["command"]),
            symptom=raw.get("symptom", "dos"),
            conditions=tuple(_parse_condition(c) for c in raw.get("conditions", [])),
            garbage=raw.get("garbage", "any"),
            manifestation=raw.get("manifestation", "reset"),
            name=raw.get("name", ""),
        )
    except KeyError as missing:
        raise ConfigError(f"bug entry missing key {missing}") from None
    except ValueError as bad:
        raise ConfigError(str(bad)) from None


def _parse_device(raw: dict) -> DeviceProfile:
    ports_raw = raw.get("ports")
    if ports_raw is None:
        ports = _STANDARD_PORTS
    else:
        ports = tuple(
            ServicePort(
                psm=int(p["psm"]),
                name=str(p.get("name", "")),
                requires_pairing=bool(p.get("requires_pairing", False)),
            )
            for p in ports_raw
        )
    if not ports:
        raise ConfigError("device advertises no service ports")
    if not any(not p.requires_pairing for p in ports):
        raise ConfigError(
            "every advertised port requires pairing, the campaign could never connect"
        )
    strictness_raw = raw.get("strictness", "strict")
    try:
        strictness = Strictness(strictness_raw)
    except ValueError:
        raise ConfigError(f"unknown strictness {strictness_raw!r}") from None
    return DeviceProfile(
        mac=str(raw.get("mac", DeviceProfile.mac)),
        name=str(raw.get("name", DeviceProfile.name)),
        device_class=int(raw.get("device_class", DeviceProfile.device_class)),
        oui=str(raw.get("oui", "")),
        ports=ports,
        strictness=strictness,
        mtu=int(raw.get("mtu", DeviceProfile.mtu)),
        max_channels=int(raw.get("max_channels", DeviceProfile.max_channels)),
        disabled_jobs=frozenset(_parse_job(j) for j in raw.get("disabled_jobs", [])),
    )


def load_config(path: str | Path, out_dir: Path | None = None) -> LoadedConfig:
    """Parse one TOML document into a device profile plus campaign config."""
    try:
        with Path(path).open("rb") as handle:
            doc = tomllib.load(handle)
    except tomllib.TOMLDecodeError as bad:
        raise ConfigError(f"{path}: {bad}") from None

    profile = _parse_device(doc.get("device", {}))
    bugs = tuple(_parse_bug(b) for b in doc.get("bugs", []))
    if bugs:
        profile = replace(profile, bugs=bugs)

    mraw = doc.get("mutation", {})
    try:
        mutation = MutationConfig(
            seed=int(mraw.get("seed", 0)),
            n_per_command=int(mraw.get("n_per_command", 1000)),
            mtu=int(mraw.get("mtu", profile.mtu)),
            garbage_max=int(mraw.get("garbage_max", 16)),
            cid_range=(
                int(mraw.get("cid_min", 0x0040)),
                int(mraw.get("cid_max", 0xFFFF)),
            ),
        )
    except ValueError as bad:
        raise ConfigError(str(bad)) from None

    craw = doc.get("campaign", {})
    states_raw = craw.get("states")
    states = (
        tuple(_parse_state(s) for s in states_raw) if states_raw is not None else None
    )
    try:
        campaign = CampaignConfig(
            mutation=mutation,
            mode=str(craw.get("mode", "core")),
            states=states,
            continue_after_reset=bool(craw.get("continue_after_reset", False)),
            max_packets=(
                int(craw["max_packets"]) if "max_packets" in craw else None
            ),
            out_dir=out_dir,
        )
    except ValueError as bad:
        raise ConfigError(str(bad)) from None

    return LoadedConfig(profile=profile, campaign=campaign)


def resolve_profile(spec: str) -> DeviceProfile:
    """A builtin name, or a path to a TOML file's [device] section."""
    if spec.endswith(".toml") or "/" in spec:
        return load_config(spec).profile
    return builtin_profile(spec)
