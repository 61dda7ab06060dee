#!/usr/bin/env python3
"""Key-period boundary tables for representative QKD link profiles.

Lower bound: spend the whole quantum key stream.  Upper bounds: block
collisions (birthday) and the plaintext volume of known key-recovery
attacks.
"""

from qrekey import planner

print("== minimum key period: use the full quantum key rate ==")
print(f"{'QKD rate':>10} {'key bits':>9} {'period (bidirectional)':>24}")
for rate in (12_500, 3_300, 550):
    for key_bits in (128, 256):
        link = planner.LinkProfile(rate, 100e6)
        cipher = planner.CipherProfile(key_bits, 128)
        period = planner.min_key_period(link, cipher)
        print(f"{rate:>10} {key_bits:>9} {period * 1000:>20.2f} ms")

print("\n== security ratio (data bits per key bit) ==")
for data_rate, label in ((100e6, "100 Mbps"), (1e9, "1 Gbps"), (1e10, "10 Gbps")):
    ratio = planner.dpk(planner.LinkProfile(12_500, data_rate))
    print(f"  {label:>9}: {ratio:>10.0f} dpk   (1 dpk is the one-time-pad landmark)")

print("\n== upper bounds at 10 Gbps ==")
small = planner.CipherProfile(128, 64)
big = planner.CipherProfile(256, 128)
print(f"  64-bit blocks, birthday (paper-compat):  {planner.birthday_limit(small, 1e10, 'paper-compat'):8.4f} s")
print(f"  64-bit blocks, birthday (block-volume):  {planner.birthday_limit(small, 1e10, 'block-volume'):8.4f} s")
print(f"  128-bit blocks, birthday (block-volume): {planner.birthday_limit(big, 1e10, 'block-volume'):8.3e} s")
attack = planner.attack_limit(2**32, 128, 1e10)
print(f"  known-attack volume (2^39 bits):         {attack.exact_seconds:8.4f} s exact, "
      f"{attack.pow2_seconds:.0f} s power-of-two")
print(f"  -> recommended max period {attack.recommended_seconds:.0f} s "
      f"(protocol-suite ceiling {attack.ipsec_ceiling_seconds:.0f} s)")
