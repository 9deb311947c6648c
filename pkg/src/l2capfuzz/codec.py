"""Packet codec for the L2CAP signaling channel.

Every signaling command travels on the fixed channel 0x0001 inside a basic
L2CAP frame.  The wire layout, all little-endian:

    offset  size  field
    ------  ----  --------------------------------------------
    0       2     payload_length   (= 4 + data_length)
    2       2     header_cid       (always 0x0001 for signaling)
    4       1     code             (command kind)
    5       1     identifier       (request/response matching)
    6       2     data_length      (bytes that follow)
    8       ...   data fields      (per-command schema)
    ...     ...   garbage tail     (anything past the schema)

Fields split into four classes that the mutation engine treats
differently:

* fixed: header_cid.  Changing it moves traffic off the signaling
  channel, so it is never touched.
* dependent: payload_length, code, identifier, data_length.  Their
  values follow from the rest of the packet and are recomputed at
  encode time.
* mutable core: psm, scid, dcid, icid, cont_id.  Channel-endpoint and
  protocol/service multiplexer fields, the interesting mutation
  surface.
* mutable application: result/status/flags and friends.  Application
  payload that a healthy stack accepts with any value.

The codec is deliberately value-agnostic: it enforces structure
(schemas, widths, length arithmetic) and nothing else.  Semantic checks
such as CID ranges live in the simulator and the mutation engine.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from enum import Enum, IntEnum

__all__ = [
    "SIGNALING_CID",
    "DYNAMIC_CID_MIN",
    "DYNAMIC_CID_MAX",
    "MAX_PAYLOAD",
    "CommandKind",
    "FieldClass",
    "FieldSpec",
    "SCHEMAS",
    "FIELD_CLASSES",
    "CID_ENDPOINT_FIELDS",
    "CHANNEL_REFERENCE",
    "CodecError",
    "SchemaError",
    "SizeError",
    "TruncatedError",
    "UnknownField",
    "L2capPacket",
    "encode",
    "decode",
    "classify_field",
    "hexdump",
    "from_hexdump",
]

SIGNALING_CID = 0x0001

# Dynamically allocated channel endpoints live in this window; values
# below it name fixed/reserved channels.
DYNAMIC_CID_MIN = 0x0040
DYNAMIC_CID_MAX = 0xFFFF

MAX_PAYLOAD = 0xFFFF

L2CAP_HEADER = struct.Struct("<HH")
COMMAND_HEADER = struct.Struct("<BBH")
U16 = struct.Struct("<H")

# Combined size of both headers: the first byte of command data.
DATA_OFFSET = L2CAP_HEADER.size + COMMAND_HEADER.size


class CommandKind(IntEnum):
    """The seventeen signaling commands, valued by their wire code."""

    COMMAND_REJECT = 0x01
    CONNECT_REQ = 0x02
    CONNECT_RSP = 0x03
    CONFIG_REQ = 0x04
    CONFIG_RSP = 0x05
    DISCONNECT_REQ = 0x06
    DISCONNECT_RSP = 0x07
    ECHO_REQ = 0x08
    ECHO_RSP = 0x09
    INFO_REQ = 0x0A
    INFO_RSP = 0x0B
    CREATE_CHANNEL_REQ = 0x0C
    CREATE_CHANNEL_RSP = 0x0D
    MOVE_CHANNEL_REQ = 0x0E
    MOVE_CHANNEL_RSP = 0x0F
    MOVE_CHANNEL_CONFIRM_REQ = 0x10
    MOVE_CHANNEL_CONFIRM_RSP = 0x11

    @property
    def wire_name(self) -> str:
        return self.name.lower()


class FieldClass(Enum):
    FIXED = "fixed"
    DEPENDENT = "dependent"
    MUTABLE_CORE = "mutable_core"
    MUTABLE_APP = "mutable_app"


@dataclass(frozen=True)
class FieldSpec:
    """One named field in a command schema.

    width is "u16" for two-byte little-endian integers or "bytes" for a
    trailing opaque byte string (at most one per schema, always last).
    """

    name: str
    width: str = "u16"
    default: int | bytes = 0


def _u16(name: str, default: int) -> FieldSpec:
    return FieldSpec(name, "u16", default)


# Schema defaults describe a benign, well-formed packet: SDP for psm,
# the first dynamic channel for every endpoint field, zeroed app fields.
SCHEMAS: dict[CommandKind, tuple[FieldSpec, ...]] = {
    CommandKind.COMMAND_REJECT: (_u16("reason", 0x0000),),
    CommandKind.CONNECT_REQ: (_u16("psm", 0x0001), _u16("scid", 0x0040)),
    CommandKind.CONNECT_RSP: (
        _u16("dcid", 0x0040),
        _u16("scid", 0x0040),
        _u16("result", 0x0000),
        _u16("status", 0x0000),
    ),
    CommandKind.CONFIG_REQ: (
        _u16("dcid", 0x0040),
        _u16("flags", 0x0000),
        FieldSpec("opt", "bytes", b""),
    ),
    CommandKind.CONFIG_RSP: (
        _u16("scid", 0x0040),
        _u16("flags", 0x0000),
        _u16("result", 0x0000),
        FieldSpec("opt", "bytes", b""),
    ),
    CommandKind.DISCONNECT_REQ: (_u16("dcid", 0x0040), _u16("scid", 0x0040)),
    CommandKind.DISCONNECT_RSP: (_u16("dcid", 0x0040), _u16("scid", 0x0040)),
    CommandKind.ECHO_REQ: (),
    CommandKind.ECHO_RSP: (),
    CommandKind.INFO_REQ: (_u16("type", 0x0001),),
    CommandKind.INFO_RSP: (_u16("type", 0x0001), _u16("result", 0x0000)),
    CommandKind.CREATE_CHANNEL_REQ: (
        _u16("psm", 0x0001),
        _u16("scid", 0x0040),
        _u16("cont_id", 0x0040),
    ),
    CommandKind.CREATE_CHANNEL_RSP: (
        _u16("dcid", 0x0040),
        _u16("scid", 0x0040),
        _u16("result", 0x0000),
        _u16("status", 0x0000),
    ),
    CommandKind.MOVE_CHANNEL_REQ: (_u16("icid", 0x0040), _u16("cont_id", 0x0040)),
    CommandKind.MOVE_CHANNEL_RSP: (_u16("icid", 0x0040), _u16("result", 0x0000)),
    CommandKind.MOVE_CHANNEL_CONFIRM_REQ: (
        _u16("icid", 0x0040),
        _u16("result", 0x0000),
    ),
    CommandKind.MOVE_CHANNEL_CONFIRM_RSP: (_u16("icid", 0x0040),),
}

_HEADER_CLASSES = {
    "header_cid": FieldClass.FIXED,
    "payload_length": FieldClass.DEPENDENT,
    "code": FieldClass.DEPENDENT,
    "identifier": FieldClass.DEPENDENT,
    "data_length": FieldClass.DEPENDENT,
}

# Class registry for every named field, including application fields of
# commands outside the signaling set (kept for taxonomy completeness).
FIELD_CLASSES: dict[str, FieldClass] = {
    **_HEADER_CLASSES,
    "psm": FieldClass.MUTABLE_CORE,
    "scid": FieldClass.MUTABLE_CORE,
    "dcid": FieldClass.MUTABLE_CORE,
    "icid": FieldClass.MUTABLE_CORE,
    "cont_id": FieldClass.MUTABLE_CORE,
    "reason": FieldClass.MUTABLE_APP,
    "result": FieldClass.MUTABLE_APP,
    "status": FieldClass.MUTABLE_APP,
    "flags": FieldClass.MUTABLE_APP,
    "type": FieldClass.MUTABLE_APP,
    "interval": FieldClass.MUTABLE_APP,
    "latency": FieldClass.MUTABLE_APP,
    "timeout": FieldClass.MUTABLE_APP,
    "spsm": FieldClass.MUTABLE_APP,
    "mtu": FieldClass.MUTABLE_APP,
    "credit": FieldClass.MUTABLE_APP,
    "mps": FieldClass.MUTABLE_APP,
    "opt": FieldClass.MUTABLE_APP,
    "qos": FieldClass.MUTABLE_APP,
}

# Channel-endpoint subset of the core class: these reference or announce
# channel endpoints and draw from the dynamic CID window when mutated.
CID_ENDPOINT_FIELDS = frozenset({"scid", "dcid", "icid", "cont_id"})

# The field each command uses to name the existing channel it operates
# on.  Commands absent here (connect requests, echo, info, reject) do
# not address an established channel.
CHANNEL_REFERENCE: dict[CommandKind, str] = {
    CommandKind.CONNECT_RSP: "dcid",
    CommandKind.CREATE_CHANNEL_RSP: "dcid",
    CommandKind.CONFIG_REQ: "dcid",
    CommandKind.CONFIG_RSP: "scid",
    CommandKind.DISCONNECT_REQ: "dcid",
    CommandKind.DISCONNECT_RSP: "dcid",
    CommandKind.MOVE_CHANNEL_REQ: "icid",
    CommandKind.MOVE_CHANNEL_RSP: "icid",
    CommandKind.MOVE_CHANNEL_CONFIRM_REQ: "icid",
    CommandKind.MOVE_CHANNEL_CONFIRM_RSP: "icid",
}

_NAME_ALIASES = {
    "id": "identifier",
    "payload_len": "payload_length",
    "data_len": "data_length",
    "len": "payload_length",
}


class CodecError(Exception):
    """Base for every codec failure."""


class SchemaError(CodecError):
    """Packet contents do not fit the command's schema or invariants."""


class SizeError(CodecError):
    """Encoded payload would exceed the 16-bit length field."""


class TruncatedError(CodecError):
    """Input ends before the declared or structural minimum."""


class UnknownField(CodecError):
    """classify_field was asked about a name the kind does not carry."""


@dataclass(frozen=True)
class L2capPacket:
    """One decoded (or to-be-encoded) signaling packet.

    data_fields is an ordered tuple of (name, value) pairs matching the
    kind's schema; for unknown codes it is a single ("raw", bytes) pair.
    data_length/payload_length of None mean "compute from content at
    construction", which is what every normal builder wants.  Explicit
    values are kept verbatim so deliberately incoherent frames can be
    represented and encoded in raw mode.
    """

    code: int
    identifier: int
    data_fields: tuple[tuple[str, int | bytes], ...] = ()
    garbage_tail: bytes = b""
    header_cid: int = SIGNALING_CID
    data_length: int | None = None
    payload_length: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "data_fields", tuple(tuple(p) for p in self.data_fields))
        if self.data_length is None:
            object.__setattr__(self, "data_length", self._content_size())
        if self.payload_length is None:
            object.__setattr__(self, "payload_length", COMMAND_HEADER.size + self.data_length)

    def _content_size(self) -> int:
        total = len(self.garbage_tail)
        for _, value in self.data_fields:
            total += len(value) if isinstance(value, bytes) else U16.size
        return total

    @property
    def kind(self) -> CommandKind | None:
        try:
            return CommandKind(self.code)
        except ValueError:
            return None

    def field(self, name: str) -> int | bytes:
        for fname, value in self.data_fields:
            if fname == name:
                return value
        raise UnknownField(f"packet has no field {name!r}")

    def has_field(self, name: str) -> bool:
        return any(fname == name for fname, _ in self.data_fields)

    @classmethod
    def build(
        cls,
        kind: CommandKind,
        identifier: int,
        garbage_tail: bytes = b"",
        **overrides: int | bytes,
    ) -> "L2capPacket":
        """Construct a schema-complete packet from defaults plus overrides."""
        schema = SCHEMAS[kind]
        known = {spec.name for spec in schema}
        stray = set(overrides) - known
        if stray:
            raise SchemaError(f"{kind.name} has no field(s) {sorted(stray)}")
        fields = tuple(
            (spec.name, overrides.get(spec.name, spec.default)) for spec in schema
        )
        return cls(
            code=int(kind),
            identifier=identifier,
            data_fields=fields,
            garbage_tail=garbage_tail,
        )


def _check_normal_form(packet: L2capPacket) -> None:
    kind = packet.kind
    if kind is None:
        if len(packet.data_fields) != 1 or packet.data_fields[0][0] != "raw":
            raise SchemaError(
                f"unknown code 0x{packet.code:02X} needs a single raw field"
            )
    else:
        schema = SCHEMAS[kind]
        names = tuple(name for name, _ in packet.data_fields)
        if names != tuple(spec.name for spec in schema):
            raise SchemaError(
                f"{kind.name} fields {names} do not match schema"
            )
    if not 0 <= packet.identifier <= 0xFF:
        raise SchemaError(f"identifier 0x{packet.identifier:X} is not one byte")
    if not 0 <= packet.header_cid <= 0xFFFF:
        raise SchemaError("header_cid is not a 16-bit value")
    expected = packet._content_size()
    if packet.data_length != expected:
        raise SchemaError(
            f"data_length {packet.data_length} != content size {expected}"
        )
    if packet.payload_length != COMMAND_HEADER.size + packet.data_length:
        raise SchemaError(
            f"payload_length {packet.payload_length} breaks the 4 + data_length rule"
        )


def _pack_fields(packet: L2capPacket) -> bytes:
    out = bytearray()
    for name, value in packet.data_fields:
        if isinstance(value, bytes):
            out += value
        else:
            if not 0 <= value <= 0xFFFF:
                raise SchemaError(f"field {name}=0x{value:X} exceeds 16 bits")
            out += U16.pack(value)
    out += packet.garbage_tail
    return bytes(out)


def encode(packet: L2capPacket, raw: bool = False) -> bytes:
    """Serialize a packet to wire bytes.

    Normal mode validates the schema and the length arithmetic and is
    what every honest sender uses.  Raw mode takes the packet's length
    and header fields verbatim, which is how deliberately malformed
    frames (mutated dependent fields, bad header CIDs) are produced for
    robustness testing.
    """
    if not raw:
        _check_normal_form(packet)
    data = _pack_fields(packet)
    data_length = packet.data_length if raw else len(data)
    payload_length = (
        packet.payload_length if raw else COMMAND_HEADER.size + len(data)
    )
    if not raw and payload_length > MAX_PAYLOAD:
        raise SizeError(f"payload of {payload_length} bytes exceeds {MAX_PAYLOAD}")
    return (
        L2CAP_HEADER.pack(payload_length & 0xFFFF, packet.header_cid & 0xFFFF)
        + COMMAND_HEADER.pack(packet.code & 0xFF, packet.identifier & 0xFF, data_length & 0xFFFF)
        + data
    )


def decode(data: bytes) -> L2capPacket:
    """Parse wire bytes into a packet.

    Requires a length-coherent frame: declared lengths must match the
    bytes actually present (TruncatedError when they overrun the input,
    SchemaError when the arithmetic disagrees).  Known codes are parsed
    per schema with any surplus landing in garbage_tail; unknown codes
    keep their whole data region as one opaque "raw" field.
    """
    if len(data) < DATA_OFFSET:
        raise TruncatedError(f"{len(data)} bytes is shorter than the two headers")
    payload_length, header_cid = L2CAP_HEADER.unpack_from(data, 0)
    code, identifier, data_length = COMMAND_HEADER.unpack_from(data, L2CAP_HEADER.size)
    available = len(data) - L2CAP_HEADER.size
    if payload_length > available or data_length > available - COMMAND_HEADER.size:
        raise TruncatedError(
            f"declared lengths ({payload_length}/{data_length}) overrun "
            f"{available} available bytes"
        )
    if payload_length != available:
        raise SchemaError(
            f"payload_length {payload_length} != {available} bytes on the wire"
        )
    if payload_length != COMMAND_HEADER.size + data_length:
        raise SchemaError(
            f"payload_length {payload_length} breaks the 4 + data_length rule"
        )
    region = data[DATA_OFFSET : DATA_OFFSET + data_length]

    try:
        kind = CommandKind(code)
    except ValueError:
        kind = None
    if kind is None:
        fields: tuple[tuple[str, int | bytes], ...] = (("raw", region),)
        garbage = b""
    else:
        parsed: list[tuple[str, int | bytes]] = []
        offset = 0
        for spec in SCHEMAS[kind]:
            if spec.width == "bytes":
                # Trailing opaque fields are indistinguishable from an
                # appended garbage tail, so they always decode empty and
                # the bytes land in garbage_tail instead.
                parsed.append((spec.name, b""))
                continue
            if offset + U16.size > len(region):
                raise TruncatedError(
                    f"{kind.name} data region of {len(region)} bytes is too "
                    f"short for field {spec.name}"
                )
            parsed.append((spec.name, U16.unpack_from(region, offset)[0]))
            offset += U16.size
        fields = tuple(parsed)
        garbage = region[offset:]

    return L2capPacket(
        code=code,
        identifier=identifier,
        data_fields=fields,
        garbage_tail=garbage,
        header_cid=header_cid,
        data_length=data_length,
        payload_length=payload_length,
    )


def _canonical(name: str) -> str:
    name = name.strip().lower().replace(" ", "_").replace("-", "_")
    return _NAME_ALIASES.get(name, name)


def classify_field(kind: CommandKind, field_name: str) -> FieldClass:
    """Return the mutation class of a field carried by this kind.

    Header fields classify for every kind; data fields only for kinds
    whose schema carries them.  Anything else raises UnknownField.
    """
    name = _canonical(field_name)
    if name in _HEADER_CLASSES:
        return _HEADER_CLASSES[name]
    if any(spec.name == name for spec in SCHEMAS[kind]):
        return FIELD_CLASSES[name]
    raise UnknownField(f"{kind.name} carries no field {field_name!r}")


def hexdump(data: bytes) -> str:
    """Two-digit uppercase hex, space separated: b'\\x08\\x00' -> '08 00'."""
    return " ".join(f"{b:02X}" for b in data)


def from_hexdump(text: str) -> bytes:
    """Inverse of hexdump; tolerant of case and surrounding whitespace."""
    return bytes.fromhex(text.replace(" ", "").strip())
