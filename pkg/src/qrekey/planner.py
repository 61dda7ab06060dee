"""Key-period boundary arithmetic.

How often must (and may) a QKD-fed IPsec link change keys?  The lower
bound comes from using the full quantum key rate; the upper bounds come
from collision (birthday) limits on the cipher block size and from the
data volume required by the best known key-recovery attacks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

SECONDS_PER_MINUTE = 60.0
IPSEC_MAX_PERIOD_S = 28_800.0  # eight hours, the protocol-suite ceiling

_VALID_KEY_BITS = (128, 192, 256, 448)
_VALID_BLOCK_BITS = (64, 128)


@dataclass(frozen=True)
class CipherProfile:
    """Key and block size of the negotiated cipher."""

    key_bits: int
    block_bits: int
    name: str = ""

    def __post_init__(self) -> None:
        if self.key_bits not in _VALID_KEY_BITS:
            raise ValueError(f"key_bits must be one of {_VALID_KEY_BITS}")
        if self.block_bits not in _VALID_BLOCK_BITS:
            raise ValueError(f"block_bits must be one of {_VALID_BLOCK_BITS}")


@dataclass(frozen=True)
class LinkProfile:
    """Quantum key rate and classical data rate of one link."""

    qkd_rate_bits_per_s: float
    data_rate_bits_per_s: float
    bidirectional: bool = True

    def __post_init__(self) -> None:
        if self.qkd_rate_bits_per_s <= 0 or self.data_rate_bits_per_s <= 0:
            raise ValueError("rates must be positive")


def min_key_period(link: LinkProfile, cipher: CipherProfile) -> float:
    """Shortest key period (seconds) that the key source can sustain.

    A bidirectional link consumes one key per direction per change, so
    the period is 2k/Q; a unidirectional link halves that.
    """
    k = cipher.key_bits
    q = link.qkd_rate_bits_per_s
    return (2 * k / q) if link.bidirectional else (k / q)


def dpk(link: LinkProfile) -> float:
    """Data bits encrypted per key bit consumed.

    1 dpk is the one-time-pad landmark; larger values trade security for
    throughput.
    """
    return link.data_rate_bits_per_s / link.qkd_rate_bits_per_s


def birthday_limit(cipher: CipherProfile, data_rate_bits_per_s: float, mode: str = "block-volume") -> float:
    """Key period (seconds) at which block collisions reach even odds.

    ``block-volume`` counts 2^(w/2) blocks of w bits each, the
    mathematically meaningful reading.  ``paper-compat`` counts 2^(w/2)
    bits, which reproduces the published half-second figure for 64-bit
    blocks at 10 Gbps.
    """
    if data_rate_bits_per_s <= 0:
        raise ValueError("data rate must be positive")
    attempts = 2.0 ** (cipher.block_bits / 2)
    if mode == "block-volume":
        return attempts * cipher.block_bits / data_rate_bits_per_s
    if mode == "paper-compat":
        return attempts / data_rate_bits_per_s
    raise ValueError(f"unknown mode {mode!r}")


@dataclass(frozen=True)
class AttackLimit:
    """Maximum key period derived from an attack's plaintext requirement."""

    exact_seconds: float
    pow2_seconds: float
    recommended_seconds: float
    ipsec_ceiling_seconds: float = IPSEC_MAX_PERIOD_S


def attack_limit(attack_plaintext_blocks: float, block_bits: int, data_rate_bits_per_s: float) -> AttackLimit:
    """Time to gather the plaintext volume a known attack requires.

    Reports the exact figure, its power-of-two rounding (attack volume
    over the rate's power-of-two floor), and the recommendation rounded
    down to whole minutes.
    """
    if attack_plaintext_blocks <= 0 or block_bits <= 0:
        raise ValueError("attack volume must be positive")
    if data_rate_bits_per_s <= 0:
        raise ValueError("data rate must be positive")
    attack_bits = attack_plaintext_blocks * block_bits
    exact = attack_bits / data_rate_bits_per_s
    pow2 = 2.0 ** (math.log2(attack_bits) - math.floor(math.log2(data_rate_bits_per_s)))
    if pow2 >= SECONDS_PER_MINUTE:
        recommended = SECONDS_PER_MINUTE * math.floor(pow2 / SECONDS_PER_MINUTE)
    else:
        recommended = pow2
    return AttackLimit(exact_seconds=exact, pow2_seconds=pow2, recommended_seconds=recommended)
