#!/usr/bin/env python3
"""Walk the salted-hash SPI sequence the way the two peers do.

Both ends derive the same SPI stream from a shared (seed, salt); the
receiver exploits that to recognize SPIs it was never told about.
"""

from qrekey.chain import SpiChainState, detect_gap, next_spi, spi_at

SEED = 0xDEADBEEF
SALT = bytes(range(16))

print("== independent derivation ==")
alice = SpiChainState(SEED, SALT)
bob = SpiChainState(SEED, SALT)
for generation in range(1, 6):
    spi_a, alice = next_spi(alice)
    spi_b, bob = next_spi(bob)
    marker = "ok" if spi_a == spi_b else "MISMATCH"
    print(f"  generation {generation}: alice={spi_a:08x} bob={spi_b:08x}  {marker}")

print("\n== random access ==")
print(f"  spi_at(seed, salt, 0)  = {spi_at(SEED, SALT, 0):08x}  (the seed itself)")
print(f"  spi_at(seed, salt, 25) = {spi_at(SEED, SALT, 25):08x}")

print("\n== gap detection after lost announcements ==")
# bob expects generation 6 next, but the announcement for generation 9
# arrives first: three messages were lost in between
expected = spi_at(SEED, SALT, 6)
received = spi_at(SEED, SALT, 9)
state = SpiChainState(SEED, SALT, 6, expected)
gap = detect_gap(expected, received, state, horizon=49)
print(f"  expected {expected:08x}, received {received:08x} -> gap {gap} (3 lost messages)")

stray = 0x12345678
print(f"  a stray SPI {stray:08x} -> gap {detect_gap(expected, stray, state, horizon=49)} (not ours)")
