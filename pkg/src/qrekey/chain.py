"""Salted-hash SPI sequence.

Both peers derive the same sequence of security parameter indexes from a
shared 32-bit seed and a 16-byte salt: each SPI is the leading 32 bits of
``sha256(be32(previous) || salt)``.  Values below 256 are reserved by
IPsec convention, so the digest is re-hashed (with the salt appended
again) until the leading word clears the reserved range.

The sequence is public but non-obvious to a third party that does not
hold the seed and salt; the receiver uses it to recognize SPIs it has
not been told about yet (gap detection after lost control messages).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

SALT_LEN = 16
SPI_MIN = 256
_SPI_MAX = 0xFFFFFFFF


class ChainError(ValueError):
    """Invalid chain parameter (seed, salt or horizon)."""


def validate_spi(value: int) -> int:
    """Check that a value is usable as an SPI (32-bit, not reserved)."""
    if not SPI_MIN <= value <= _SPI_MAX:
        raise ChainError(f"SPI {value:#x} outside [{SPI_MIN:#x}, {_SPI_MAX:#x}]")
    return value


def step_value(current: int, salt: bytes) -> int:
    """Next SPI after ``current`` under ``salt``.

    Re-hashes the digest until the leading 32 bits are >= 256.
    """
    digest = hashlib.sha256(current.to_bytes(4, "big") + salt).digest()
    value = int.from_bytes(digest[:4], "big")
    while value < SPI_MIN:
        digest = hashlib.sha256(digest + salt).digest()
        value = int.from_bytes(digest[:4], "big")
    return value


@dataclass(frozen=True)
class SpiChainState:
    """Position in an SPI chain.

    ``current`` is the SPI at ``index`` generations from the seed; it is
    carried so that advancing is O(1).  Equal (seed, salt, index) states
    always hold equal ``current`` values.
    """

    seed: int
    salt: bytes
    index: int = 0
    current: int = -1

    def __post_init__(self) -> None:
        validate_spi(self.seed)
        if len(self.salt) != SALT_LEN:
            raise ChainError(f"salt must be {SALT_LEN} bytes, got {len(self.salt)}")
        if self.index < 0:
            raise ChainError("index must be non-negative")
        if self.current == -1:
            object.__setattr__(self, "current", spi_at(self.seed, self.salt, self.index))


def next_spi(state: SpiChainState) -> tuple[int, SpiChainState]:
    """Advance one generation; returns (new SPI, advanced state)."""
    value = step_value(state.current, state.salt)
    return value, SpiChainState(state.seed, state.salt, state.index + 1, value)


def spi_at(seed: int, salt: bytes, n: int) -> int:
    """SPI ``n`` generations after the seed; n=0 is the seed itself."""
    if n < 0:
        raise ChainError("generation must be non-negative")
    validate_spi(seed)
    value = seed
    for _ in range(n):
        value = step_value(value, salt)
    return value


def detect_gap(expected: int, received: int, state: SpiChainState, horizon: int) -> int | None:
    """Offset of ``received`` ahead of ``expected`` on the chain.

    Returns k in [0, horizon] such that ``received`` is the chain value k
    steps ahead of ``expected``, or None when no match exists within the
    horizon.  Only the salt is taken from ``state``; the walk starts at
    ``expected`` regardless of the state's own position.
    """
    if horizon < 1:
        raise ChainError("horizon must be >= 1")
    value = expected
    for k in range(horizon + 1):
        if value == received:
            return k
        value = step_value(value, state.salt)
    return None
