"""Core-field mutation engine.

The mutation strategy leans on the field classes from the codec:

* fixed fields are never touched (losing the signaling channel ends the
  session, which tests nothing),
* dependent fields are recomputed at encode time so the frame still
  parses,
* core fields get hostile values: psm is drawn from ranges a healthy
  peer would never use, channel-endpoint fields (scid/dcid/icid/
  cont_id) are drawn from the normal dynamic window while ignoring what
  was actually allocated,
* application fields keep their defaults (a healthy stack accepts any
  value there, so mutating them mostly wastes packets),

and every packet gets a random garbage tail appended, up to whatever
fits under the MTU.

Abnormal psm pool: the seven two-byte ranges whose upper octet is a
small odd value (0x01xx, 0x03xx, ... 0x0Dxx) plus every even 16-bit
value (legal psm values are odd-low-octet by convention).  Sampling is
weighted by range cardinality, so the even set dominates.

The draw protocol is fixed and worth knowing when replaying records:
for each schema field in order, psm costs one randrange draw (range
selection and offset fold into one index), each endpoint field costs
one randrange draw, then one draw for the garbage length and one
randbytes call for the garbage itself.  A seeded random.Random (or any
stub with randrange/randbytes) therefore reproduces packets bit for
bit.

baseline_mutate is the deliberately dumb strategy used for comparison
runs: it redraws a random non-empty subset of everything except the
fixed header (dependent length/code fields included, identifiers
excluded so request bookkeeping stays sane), with no range discipline.
Code redraws come from outside the known code points: relabeling a
frame as a different known command is just another schema, not a
detectable length anomaly.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Iterable, Protocol

from .codec import (
    CID_ENDPOINT_FIELDS,
    COMMAND_HEADER,
    DYNAMIC_CID_MAX,
    DYNAMIC_CID_MIN,
    SCHEMAS,
    CommandKind,
    L2capPacket,
    encode,
    hexdump,
)

__all__ = [
    "PSM_ABNORMAL_RANGES",
    "RandomSource",
    "IdCounter",
    "MutationConfig",
    "MutationRecord",
    "mutate_command",
    "baseline_mutate",
    "generate_batch",
]

# Odd-prefix psm ranges plus the all-even set, as (lo, hi, step).
PSM_ABNORMAL_RANGES: tuple[tuple[int, int, int], ...] = (
    (0x0100, 0x01FF, 1),
    (0x0300, 0x03FF, 1),
    (0x0500, 0x05FF, 1),
    (0x0700, 0x07FF, 1),
    (0x0900, 0x09FF, 1),
    (0x0B00, 0x0BFF, 1),
    (0x0D00, 0x0DFF, 1),
    (0x0000, 0xFFFE, 2),
)

_KNOWN_CODES = {int(kind) for kind in CommandKind}
_UNKNOWN_CODES = tuple(sorted(set(range(0x100)) - _KNOWN_CODES))

# Dependent fields the baseline strategy is allowed to corrupt.
_BASELINE_DEPENDENT = ("payload_length", "data_length", "code")


class RandomSource(Protocol):
    def randrange(self, stop: int) -> int: ...
    def randbytes(self, n: int) -> bytes: ...


class IdCounter:
    """Identifier sequence for one session: 0x01..0xFF, then wrap."""

    def __init__(self, start: int = 0x01):
        if not 0x01 <= start <= 0xFF:
            raise ValueError("identifier counter starts in 0x01..0xFF")
        self._next = start

    def take(self) -> int:
        value = self._next
        self._next = 0x01 if value == 0xFF else value + 1
        return value


@dataclass(frozen=True)
class MutationConfig:
    """Knobs for one fuzzing run; defaults match the reference setup."""

    seed: int = 0
    n_per_command: int = 1000
    mtu: int = 672
    garbage_max: int = 16
    cid_range: tuple[int, int] = (DYNAMIC_CID_MIN, DYNAMIC_CID_MAX)
    psm_ranges: tuple[tuple[int, int, int], ...] = PSM_ABNORMAL_RANGES

    def __post_init__(self) -> None:
        if self.n_per_command < 1:
            raise ValueError("n_per_command must be positive")
        if self.mtu < 48:
            raise ValueError("mtu too small to carry any signaling command")
        if self.garbage_max < 0:
            raise ValueError("garbage_max must be non-negative")
        lo, hi = self.cid_range
        if not (0 <= lo <= hi <= 0xFFFF):
            raise ValueError("cid_range must be an ascending 16-bit window")
        for rlo, rhi, rstep in self.psm_ranges:
            if rstep < 1 or rlo > rhi:
                raise ValueError("psm range bounds must ascend")

    def rng(self) -> random.Random:
        return random.Random(self.seed)


def _range_size(lo: int, hi: int, step: int) -> int:
    return (hi - lo) // step + 1


def _draw_psm(config: MutationConfig, rng: RandomSource) -> int:
    # One draw over the summed cardinality picks both the range and the
    # offset inside it; heavier ranges are proportionally likelier.
    total = sum(_range_size(*r) for r in config.psm_ranges)
    pick = rng.randrange(total)
    for lo, hi, step in config.psm_ranges:
        size = _range_size(lo, hi, step)
        if pick < size:
            return lo + pick * step
        pick -= size
    raise AssertionError("weighted pick out of bounds")


def _draw_cid(config: MutationConfig, rng: RandomSource) -> int:
    lo, hi = config.cid_range
    return lo + rng.randrange(hi - lo + 1)


@dataclass(frozen=True)
class MutationRecord:
    """One generated packet plus everything needed to audit it."""

    kind: CommandKind
    mode: str
    packet: L2capPacket
    wire: bytes
    mutated_fields: tuple[tuple[str, int | bytes, int | bytes], ...]
    garbage: bytes
    identifier: int
    draw_index: int = 0
    rng_draws: tuple[tuple[str, int | str], ...] = field(default=(), repr=False)

    def changed_anything(self) -> bool:
        return bool(self.garbage) or any(old != new for _, old, new in self.mutated_fields)

    def to_json_dict(self) -> dict:
        return {
            "command": self.kind.wire_name,
            "mode": self.mode,
            "identifier": self.identifier,
            "draw_index": self.draw_index,
            "mutated_fields": [
                {
                    "field": name,
                    "old": old.hex().upper() if isinstance(old, bytes) else old,
                    "new": new.hex().upper() if isinstance(new, bytes) else new,
                }
                for name, old, new in self.mutated_fields
            ],
            "garbage": hexdump(self.garbage),
            "packet": hexdump(self.wire),
        }


def _garbage_bound(config: MutationConfig, fields_size: int) -> int:
    # Total payload (command header + data) must stay under the MTU.
    room = config.mtu - COMMAND_HEADER.size - fields_size
    return max(0, min(config.garbage_max, room))


def _draw_garbage(
    config: MutationConfig, rng: RandomSource, fields_size: int,
    draws: list[tuple[str, int | str]],
) -> bytes:
    bound = _garbage_bound(config, fields_size)
    length = rng.randrange(bound + 1)
    draws.append(("garbage_len", length))
    tail = rng.randbytes(length) if length else b""
    if length:
        draws.append(("garbage", tail.hex().upper()))
    return tail


def _fields_size(kind: CommandKind) -> int:
    return sum(
        len(spec.default) if spec.width == "bytes" else 2 for spec in SCHEMAS[kind]
    )


def mutate_command(
    kind: CommandKind,
    config: MutationConfig,
    rng: RandomSource,
    identifier: int = 0x01,
    draw_index: int = 0,
) -> MutationRecord:
    """Build one core-field mutant of the kind's default packet."""
    draws: list[tuple[str, int | str]] = []
    overrides: dict[str, int] = {}
    mutated: list[tuple[str, int | bytes, int | bytes]] = []

    for spec in SCHEMAS[kind]:
        if spec.name == "psm":
            value = _draw_psm(config, rng)
        elif spec.name in CID_ENDPOINT_FIELDS:
            value = _draw_cid(config, rng)
        else:
            continue  # application fields stay at their defaults
        overrides[spec.name] = value
        mutated.append((spec.name, spec.default, value))
        draws.append((spec.name, value))

    garbage = _draw_garbage(config, rng, _fields_size(kind), draws)
    packet = L2capPacket.build(kind, identifier, garbage_tail=garbage, **overrides)
    return MutationRecord(
        kind=kind,
        mode="core",
        packet=packet,
        wire=encode(packet),
        mutated_fields=tuple(mutated),
        garbage=garbage,
        identifier=identifier,
        draw_index=draw_index,
        rng_draws=tuple(draws),
    )


def baseline_mutate(
    kind: CommandKind,
    config: MutationConfig,
    rng: RandomSource,
    identifier: int = 0x01,
    draw_index: int = 0,
) -> MutationRecord:
    """Build one anything-goes mutant (fixed header excluded)."""
    schema = SCHEMAS[kind]
    eligible = list(_BASELINE_DEPENDENT) + [
        spec.name for spec in schema if spec.width == "u16"
    ]
    picked: list[str] = []
    while not picked:
        picked = [name for name in eligible if rng.randrange(2)]

    draws: list[tuple[str, int | str]] = []
    overrides: dict[str, int] = {}
    mutated: list[tuple[str, int | bytes, int | bytes]] = []
    new_code: int | None = None
    length_overrides: dict[str, int] = {}

    for name in picked:
        if name == "code":
            value = _UNKNOWN_CODES[rng.randrange(len(_UNKNOWN_CODES))]
            new_code = value
            mutated.append(("code", int(kind), value))
        elif name in ("payload_length", "data_length"):
            value = rng.randrange(0x10000)
            length_overrides[name] = value
        else:
            value = rng.randrange(0x10000)
            overrides[name] = value
            default = next(s.default for s in schema if s.name == name)
            mutated.append((name, default, value))
        draws.append((name, value))

    garbage = _draw_garbage(config, rng, _fields_size(kind), draws)
    shaped = L2capPacket.build(kind, identifier, garbage_tail=garbage, **overrides)
    # Length lies are recorded against what an honest encoder would put
    # on the wire, then stamped over the computed values.
    for name, value in length_overrides.items():
        mutated.append((name, getattr(shaped, name), value))
    packet = L2capPacket(
        code=new_code if new_code is not None else shaped.code,
        identifier=identifier,
        data_fields=shaped.data_fields,
        garbage_tail=garbage,
        data_length=length_overrides.get("data_length", shaped.data_length),
        payload_length=length_overrides.get("payload_length", shaped.payload_length),
    )
    return MutationRecord(
        kind=kind,
        mode="baseline",
        packet=packet,
        wire=encode(packet, raw=True),
        mutated_fields=tuple(mutated),
        garbage=garbage,
        identifier=identifier,
        draw_index=draw_index,
        rng_draws=tuple(draws),
    )


def generate_batch(
    commands: Iterable[CommandKind],
    config: MutationConfig,
    rng: RandomSource | None = None,
    ids: IdCounter | None = None,
    mode: str = "core",
    n: int | None = None,
) -> list[MutationRecord]:
    """n mutants per command, command-major, in code order.

    Same commands, same config, same rng state: byte-identical output.
    """
    if mode not in ("core", "baseline"):
        raise ValueError(f"unknown mutation mode {mode!r}")
    rng = config.rng() if rng is None else rng
    ids = IdCounter() if ids is None else ids
    n = config.n_per_command if n is None else n
    make = mutate_command if mode == "core" else baseline_mutate
    batch: list[MutationRecord] = []
    index = 0
    for kind in sorted(commands, key=int):
        for _ in range(n):
            batch.append(make(kind, config, rng, identifier=ids.take(), draw_index=index))
            index += 1
    return batch
