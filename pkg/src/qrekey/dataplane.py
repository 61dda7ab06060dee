"""Mock SA database: the kernel IPsec subsystem boiled down to SPI bookkeeping.

Per channel, a sender holds exactly one outbound SA (installing a new one
replaces it) and a receiver holds a FIFO window of at most W inbound SAs,
evicting the generation-oldest on overflow.  "Encryption" stamps packets
with the current outbound SPI; "decryption" succeeds iff the packet's SPI
is in the inbound window.  No actual cryptography runs -- decipherability
is what the protocol synchronizes and what the simulation measures.

Backends are pluggable behind :func:`make_dataplane`; only the mock
backend exists here (a real-kernel backend is out of scope by design).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import IntEnum


class Channel(IntEnum):
    DATA = 0
    CTRL = 1


class Direction(IntEnum):
    OUTBOUND = 0
    INBOUND = 1


class SaInstallError(ValueError):
    """Install violated table invariants (direction or generation order)."""


@dataclass(frozen=True)
class SecurityAssociation:
    spi: int
    key: bytes
    direction: Direction
    channel: Channel
    generation: int
    installed_at_us: int = 0


@dataclass
class DataPacket:
    seq: int
    spi: int
    size_bytes: int
    sent_at_us: int
    probe: bool = False

    def __post_init__(self) -> None:
        if self.size_bytes <= 0:
            raise ValueError("size_bytes must be positive")


@dataclass
class SaTable:
    """SA state for one peer, both directions, both channels."""

    outbound: dict = field(default_factory=dict)  # channel -> SA
    windows: dict = field(default_factory=dict)   # channel -> deque[SA]
    window_spis: dict = field(default_factory=dict)  # channel -> set[int]
    blocked_no_sa: int = 0
    deciphered: int = 0
    out_of_sync: int = 0

    def install_outbound(self, sa: SecurityAssociation) -> None:
        """Atomically replace the outbound SA for sa.channel."""
        if sa.direction != Direction.OUTBOUND:
            raise SaInstallError("install_outbound requires an outbound SA")
        self.outbound[sa.channel] = sa

    def clear(self) -> None:
        """Drop every SA (reset)."""
        self.outbound.clear()
        self.windows.clear()
        self.window_spis.clear()

    def install_inbound(self, sa: SecurityAssociation, window: int) -> SecurityAssociation | None:
        """Append to the inbound window; evict and return the oldest at capacity.

        Generations must be strictly increasing within a channel; the
        protocol installs in order, so a violation signals a bug above.
        """
        if sa.direction != Direction.INBOUND:
            raise SaInstallError("install_inbound requires an inbound SA")
        win = self.windows.get(sa.channel)
        if win is None:
            win = self.windows[sa.channel] = deque()
            self.window_spis[sa.channel] = set()
        if win and sa.generation <= win[-1].generation:
            raise SaInstallError(
                f"non-monotonic generation {sa.generation} after {win[-1].generation}"
            )
        win.append(sa)
        self.window_spis[sa.channel].add(sa.spi)
        if len(win) > window:
            evicted = win.popleft()
            self.window_spis[sa.channel].discard(evicted.spi)
            return evicted
        return None

    def outbound_spi(self, channel: Channel) -> int | None:
        sa = self.outbound.get(channel)
        return sa.spi if sa is not None else None

    def encrypt(self, channel: Channel, seq: int, size_bytes: int, now_us: int, probe: bool = False) -> DataPacket | None:
        """Stamp a payload with the current outbound SPI.

        Returns None (and counts blocked_no_sa) when no outbound SA is
        installed for the channel.
        """
        sa = self.outbound.get(channel)
        if sa is None:
            self.blocked_no_sa += 1
            return None
        return DataPacket(seq=seq, spi=sa.spi, size_bytes=size_bytes, sent_at_us=now_us, probe=probe)

    def has_inbound(self, channel: Channel, spi: int) -> bool:
        spis = self.window_spis.get(channel)
        return spis is not None and spi in spis

    def decrypt(self, packet: DataPacket, channel: Channel = Channel.DATA) -> bool:
        """True iff the packet's SPI matches an installed inbound SA.

        Misses count as out-of-sync; the packet is dropped, not queued
        for late SAs (the inbound window is the compensation mechanism).
        """
        if self.has_inbound(channel, packet.spi):
            self.deciphered += 1
            return True
        self.out_of_sync += 1
        return False

    def window_size(self, channel: Channel) -> int:
        win = self.windows.get(channel)
        return len(win) if win else 0

    def window_generations(self, channel: Channel) -> list[int]:
        win = self.windows.get(channel)
        return [sa.generation for sa in win] if win else []


def make_dataplane(backend: str = "mock") -> SaTable:
    """Backend factory; only the in-memory mock exists."""
    if backend != "mock":
        raise ValueError(f"unknown dataplane backend {backend!r}")
    return SaTable()
