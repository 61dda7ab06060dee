"""Buffered key store fed by a rate-limited key source.

Mirrors the five-buffer point-to-point store: freshly produced key
blocks land in a *pickup* queue, move to the *common* store once their
presence on the peer is verified, and are then dedicated by the master
to the *outgoing*, *incoming* and *application* buffers.  Outgoing and
incoming fill first, up to a threshold; only then does the application
buffer receive material.  Rekeying draws its seeds, salts and session
keys from the application buffer, which is what produces the slow start
of a freshly keyed connection under a rate-limited source.

Two simplifications, both config-visible:

* Outgoing/incoming are byte counters; their message-protection role is
  not executed, only their precedence over the application buffer.
* Application draw *content* is derived deterministically from the
  source seed and a caller-supplied label, while the buffer level gates
  availability.  Labels are stable across peers, so both sides obtain
  byte-identical material for the same purpose regardless of the order
  in which unrelated draws interleave (e.g. data vs control channel).
"""

from __future__ import annotations

import hashlib
from collections import deque
from dataclasses import dataclass, field

DEDICATIONS = ("unassigned", "outgoing", "incoming", "application")


class KeyStarved(Exception):
    """Application buffer cannot satisfy a draw."""


class KeystoreDesync(Exception):
    """Promotion referenced a block the pickup store does not hold."""


@dataclass
class KeyBlock:
    id: int
    data: bytes
    dedication: str = "unassigned"


class KeySource:
    """Deterministic key producer, rate-limited or infinite.

    Two sources built with the same seed emit identical block streams
    and identical label-derived material; the simulator gives each peer
    its own instance with a shared seed.
    """

    def __init__(self, seed: int, rate_bits_per_s: float | None = None, block_bits: int = 256):
        if block_bits <= 0 or block_bits % 8:
            raise ValueError("block_bits must be a positive multiple of 8")
        if rate_bits_per_s is not None and rate_bits_per_s <= 0:
            raise ValueError("rate must be positive (or None for infinite)")
        self.seed = seed
        self.rate_bits_per_s = rate_bits_per_s
        self.block_bits = block_bits
        self.produced_bits = 0
        self._carry_bits = 0.0
        self._last_us = 0
        self._next_id = 0

    @property
    def infinite(self) -> bool:
        return self.rate_bits_per_s is None

    def _block_data(self, block_id: int) -> bytes:
        return self.material(("block", block_id), self.block_bits // 8)

    def material(self, label: tuple, n_bytes: int) -> bytes:
        """Deterministic byte expansion for (seed, label)."""
        tag = repr(label).encode()
        out = bytearray()
        counter = 0
        while len(out) < n_bytes:
            out += hashlib.sha256(
                self.seed.to_bytes(8, "big", signed=False) + tag + counter.to_bytes(4, "big")
            ).digest()
            counter += 1
        return bytes(out[:n_bytes])

    def produce(self, now_us: int) -> list[KeyBlock]:
        """Whole blocks the rate allows since the last call.

        Infinite sources produce nothing here; their stores satisfy
        draws on demand.
        """
        if now_us < self._last_us:
            raise ValueError("time went backwards")
        if self.infinite:
            self._last_us = now_us
            return []
        dt = (now_us - self._last_us) / 1e6
        self._last_us = now_us
        self._carry_bits += self.rate_bits_per_s * dt
        n = int(self._carry_bits // self.block_bits)
        self._carry_bits -= n * self.block_bits
        blocks = []
        for _ in range(n):
            blocks.append(KeyBlock(self._next_id, self._block_data(self._next_id)))
            self._next_id += 1
            self.produced_bits += self.block_bits
        return blocks


@dataclass
class _CommonChunk:
    available_at_us: int
    data: bytes
    offset: int = 0

    @property
    def remaining(self) -> int:
        return len(self.data) - self.offset


@dataclass
class KeyStore:
    """One peer's view of the shared key material."""

    source: KeySource
    role: str = "master"
    threshold_bytes: int = 4096
    verify_delay_us: int = 0

    pickup: deque = field(default_factory=deque)
    common: deque = field(default_factory=deque)
    outgoing_bytes: int = 0
    incoming_bytes: int = 0
    application_bytes: int = 0
    consumed_bytes: int = 0

    def produce(self, now_us: int) -> int:
        """Pull newly generated blocks into the pickup store."""
        blocks = self.source.produce(now_us)
        self.pickup.extend(blocks)
        return len(blocks)

    def verify_and_promote(self, ids: list[int], now_us: int) -> None:
        """Move verified blocks pickup -> common, order preserved.

        The move is atomic: an unknown id raises and nothing moves.
        Promoted bytes become assignable at ``now + verify_delay``.
        """
        held = {b.id: b for b in self.pickup}
        missing = [i for i in ids if i not in held]
        if missing:
            raise KeystoreDesync(f"unknown block ids {missing}")
        wanted = set(ids)
        moved = [b for b in self.pickup if b.id in wanted]
        self.pickup = deque(b for b in self.pickup if b.id not in wanted)
        avail = now_us + self.verify_delay_us
        for b in moved:
            self.common.append(_CommonChunk(avail, b.data))

    def promote_all(self, now_us: int) -> None:
        """Acknowledge every pickup block (simulation bookkeeping)."""
        self.verify_and_promote([b.id for b in self.pickup], now_us)

    def _take_common(self, n_bytes: int, now_us: int) -> int:
        taken = 0
        while n_bytes > 0 and self.common:
            head = self.common[0]
            if head.available_at_us > now_us:
                break
            chunk = min(n_bytes, head.remaining)
            head.offset += chunk
            taken += chunk
            n_bytes -= chunk
            if head.remaining == 0:
                self.common.popleft()
        return taken

    def assign(self, now_us: int) -> tuple[int, int, int]:
        """Dedicate available common bytes (master only).

        Outgoing and incoming fill to the threshold first; the surplus
        goes to the application buffer.  Returns the bytes routed to
        (outgoing, incoming, application).
        """
        if self.role != "master":
            raise PermissionError("only the master assigns key material")
        return self._assign(now_us)

    def mirror_assign(self, now_us: int) -> tuple[int, int, int]:
        """Apply the master's assignment on the slave side.

        Stores are driven from one deterministic source, so the slave
        reproduces the master's routing without explicit signaling.
        """
        return self._assign(now_us)

    def _assign(self, now_us: int) -> tuple[int, int, int]:
        to_out = self._take_common(max(0, self.threshold_bytes - self.outgoing_bytes), now_us)
        self.outgoing_bytes += to_out
        to_in = self._take_common(max(0, self.threshold_bytes - self.incoming_bytes), now_us)
        self.incoming_bytes += to_in
        to_app = 0
        if self.outgoing_bytes >= self.threshold_bytes and self.incoming_bytes >= self.threshold_bytes:
            to_app = self._take_common(2**62, now_us)
            self.application_bytes += to_app
        return to_out, to_in, to_app

    def pump(self, now_us: int) -> None:
        """produce + promote + assign in one step (simulation driver)."""
        self.produce(now_us)
        self.promote_all(now_us)
        self._assign(now_us)

    @property
    def application_bits(self) -> int:
        return self.application_bytes * 8

    def can_draw(self, n_bits: int) -> bool:
        return self.source.infinite or self.application_bits >= n_bits

    def draw_application(self, n_bits: int, label: tuple) -> bytes:
        """Draw ``n_bits`` of session material for ``label``.

        Debits the application buffer; raises :class:`KeyStarved` when
        the buffer cannot cover the draw.  Identical (source seed,
        label) yields identical bytes on both peers.
        """
        if n_bits % 8:
            raise ValueError("draw size must be a multiple of 8 bits")
        n_bytes = n_bits // 8
        if not self.source.infinite:
            if self.application_bytes < n_bytes:
                raise KeyStarved(f"need {n_bytes} B, have {self.application_bytes} B")
            self.application_bytes -= n_bytes
        self.consumed_bytes += n_bytes
        return self.source.material(("app",) + label, n_bytes)

    def total_bytes(self) -> int:
        """Bytes currently held across all buffers plus consumed."""
        held = sum(len(b.data) for b in self.pickup)
        held += sum(c.remaining for c in self.common)
        return held + self.outgoing_bytes + self.incoming_bytes + self.application_bytes + self.consumed_bytes
