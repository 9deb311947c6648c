"""Transports that carry signaling frames to a target.

Three implementations share one interface:

  SimTransport          in-process, wraps an L2capDevice directly
  UdpLoopbackTransport  datagram shim pushing the same frames through a
                        localhost UDP socket pair, useful to exercise
                        real serialization boundaries
  HciTransport          placeholder for a raw HCI socket to physical
                        hardware; always unavailable in this build

The optional ACL prologue shows where the 4-byte ACL header would sit
on a real link: [handle+flags u16][length u16] in front of the L2CAP
frame.  SimTransport composes and strips it when enabled so tests can
verify the framing without hardware.
"""

from __future__ import annotations

import socket
import struct
import threading
from dataclasses import dataclass
from pathlib import Path

from .codec import CommandKind, L2capPacket, decode, encode
from .simulator import DeviceProfile, L2capDevice, Reaction, ScanInfo, ServicePort

__all__ = [
    "Outcome",
    "TransportUnavailable",
    "Transport",
    "SimTransport",
    "UdpLoopbackTransport",
    "HciTransport",
    "ACL_HEADER",
    "ACL_HANDLE_FLAGS",
]

# Connection handle 0x0001 with packet-boundary flag "start of frame".
ACL_HEADER = struct.Struct("<HH")
ACL_HANDLE_FLAGS = 0x2001


@dataclass(frozen=True)
class Outcome:
    """Transport-level result of one frame exchange.

    kind is one of reply, silence, reset, aborted, refused.  A reply
    carries the peer's frame; silence means the receive window elapsed
    without data; the rest are connection-level errors observed while
    sending or waiting.
    """

    kind: str
    payload: bytes = b""

    @property
    def is_reply(self) -> bool:
        return self.kind == "reply"

    @property
    def is_error(self) -> bool:
        return self.kind in ("reset", "aborted", "refused")


class TransportUnavailable(RuntimeError):
    """The requested transport cannot run in this environment."""


class Transport:
    """Frame-level interface the fuzzing loop talks to."""

    def exchange(self, frame: bytes) -> Outcome:
        raise NotImplementedError

    def probe_connect(self, psm: int) -> str:
        """Open-and-close probe of one service port: ok/refused/failed."""
        raise NotImplementedError

    def scan_info(self) -> ScanInfo:
        raise NotImplementedError

    def list_ports(self) -> tuple[ServicePort, ...]:
        raise NotImplementedError

    def crash_dump_present(self) -> bool:
        """True when a new crash dump appeared since the last call."""
        raise NotImplementedError

    def reset_target(self) -> None:
        raise NotImplementedError

    def close(self) -> None:
        pass

    def ping(self, identifier: int = 0xEE) -> bool:
        """Echo round trip, the liveness check under every verdict."""
        frame = encode(L2capPacket.build(CommandKind.ECHO_REQ, identifier))
        outcome = self.exchange(frame)
        if not outcome.is_reply:
            return False
        try:
            reply = decode(outcome.payload)
        except Exception:
            return False
        return reply.kind is CommandKind.ECHO_RSP


def _reaction_outcome(reaction: Reaction) -> Outcome:
    if reaction.kind == "reply":
        return Outcome("reply", reaction.payload)
    if reaction.kind == "silence":
        return Outcome("silence")
    return Outcome(reaction.error or "reset")


class SimTransport(Transport):
    """Direct in-process link to a simulated device."""

    def __init__(
        self,
        profile: DeviceProfile | None = None,
        *,
        device: L2capDevice | None = None,
        workdir: str | Path | None = None,
        acl_framing: bool = False,
    ):
        if device is None:
            device = L2capDevice(profile or DeviceProfile(), workdir=workdir)
        self.device = device
        self.acl_framing = acl_framing

    def frame_to_wire(self, frame: bytes) -> bytes:
        if not self.acl_framing:
            return frame
        return ACL_HEADER.pack(ACL_HANDLE_FLAGS, len(frame)) + frame

    def wire_to_frame(self, wire: bytes) -> bytes:
        if not self.acl_framing:
            return wire
        if len(wire) < ACL_HEADER.size:
            raise ValueError("short ACL prologue")
        _, length = ACL_HEADER.unpack_from(wire, 0)
        body = wire[ACL_HEADER.size:]
        if len(body) != length:
            raise ValueError("ACL length disagrees with body")
        return body

    def exchange(self, frame: bytes) -> Outcome:
        wire = self.frame_to_wire(frame)
        reaction = self.device.handle(self.wire_to_frame(wire))
        outcome = _reaction_outcome(reaction)
        if outcome.is_reply:
            return Outcome("reply", self.wire_to_frame(self.frame_to_wire(outcome.payload)))
        return outcome

    def probe_connect(self, psm: int) -> str:
        return self.device.connect_probe(psm)

    def scan_info(self) -> ScanInfo:
        return self.device.scan_info()

    def list_ports(self) -> tuple[ServicePort, ...]:
        return self.device.list_ports()

    def crash_dump_present(self) -> bool:
        return self.device.new_crash_dump() is not None

    def reset_target(self) -> None:
        self.device.reset()


# One status byte in front of every server datagram keeps UDP able to
# express connection-level errors; silence is expressed by not
# answering at all and letting the client time out.
_UDP_STATUS = {"reply": 0x00, "reset": 0x01, "aborted": 0x02, "refused": 0x03}
_UDP_KIND = {v: k for k, v in _UDP_STATUS.items()}


class UdpLoopbackTransport(Transport):
    """The same device behind a localhost UDP socket pair.

    The data path (frames under test) really crosses the socket; scan
    and probe metadata stay in-process, which is fine for a loopback
    harness whose point is serialization.
    """

    def __init__(
        self,
        profile: DeviceProfile | None = None,
        *,
        workdir: str | Path | None = None,
        timeout: float = 0.2,
    ):
        self.device = L2capDevice(profile or DeviceProfile(), workdir=workdir)
        self.timeout = timeout
        self._server = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self._server.bind(("127.0.0.1", 0))
        self._server.settimeout(0.05)
        self._client = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self._client.settimeout(timeout)
        self._client.connect(self._server.getsockname())
        self._running = True
        self._thread = threading.Thread(target=self._serve, daemon=True)
        self._thread.start()

    def _serve(self) -> None:
        while self._running:
            try:
                data, peer = self._server.recvfrom(0x20000)
            except socket.timeout:
                continue
            except OSError:
                return
            reaction = self.device.handle(data)
            if reaction.kind == "silence":
                continue
            if reaction.kind == "reply":
                self._server.sendto(bytes([_UDP_STATUS["reply"]]) + reaction.payload, peer)
            else:
                status = _UDP_STATUS.get(reaction.error or "reset", 0x01)
                self._server.sendto(bytes([status]), peer)

    def exchange(self, frame: bytes) -> Outcome:
        self._client.send(frame)
        try:
            data = self._client.recv(0x20000)
        except socket.timeout:
            return Outcome("silence")
        if not data:
            return Outcome("silence")
        kind = _UDP_KIND.get(data[0], "reset")
        if kind == "reply":
            return Outcome("reply", data[1:])
        return Outcome(kind)

    def probe_connect(self, psm: int) -> str:
        return self.device.connect_probe(psm)

    def scan_info(self) -> ScanInfo:
        return self.device.scan_info()

    def list_ports(self) -> tuple[ServicePort, ...]:
        return self.device.list_ports()

    def crash_dump_present(self) -> bool:
        return self.device.new_crash_dump() is not None

    def reset_target(self) -> None:
        self.device.reset()

    def close(self) -> None:
        self._running = False
        self._client.close()
        self._server.close()
        self._thread.join(timeout=1.0)


class HciTransport(Transport):
    """Raw HCI socket to physical hardware.  Not available here.

    Driving a real controller needs CAP_NET_RAW, an attached adapter
    and a kernel Bluetooth stack, none of which exist in this sandbox.
    The class exists so callers can select it and get a clear error.
    """

    def __init__(self, adapter: str = "hci0"):
        self.adapter = adapter

    def _unavailable(self) -> TransportUnavailable:
        return TransportUnavailable(
            f"raw HCI access to {self.adapter} requires CAP_NET_RAW and "
            "a physical controller; use the simulator transports instead"
        )

    def exchange(self, frame: bytes) -> Outcome:
        raise self._unavailable()

    def probe_connect(self, psm: int) -> str:
        raise self._unavailable()

    def scan_info(self) -> ScanInfo:
        raise self._unavailable()

    def list_ports(self) -> tuple[ServicePort, ...]:
        raise self._unavailable()

    def crash_dump_present(self) -> bool:
        raise self._unavailable()

    def reset_target(self) -> None:
        raise self._unavailable()
