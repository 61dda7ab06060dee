#!/usr/bin/env python3
"""Slow start of a freshly keyed connection under a rate-limited source.

The messaging buffers (outgoing, incoming) must reach their threshold
before the application buffer sees a single byte, so the first rekeying
material becomes available only after the fill time -- and so does the
session itself.
"""

from qrekey.keystore import KeySource, KeyStarved, KeyStore
from qrekey.netsim import KeystoreConfig, SimConfig, run
from qrekey.protocol import ProtocolConfig

RATE = 200_000  # key bits per second
THRESHOLD = 4096

store = KeyStore(KeySource(7, RATE), threshold_bytes=THRESHOLD)
print(f"source {RATE} b/s, threshold {THRESHOLD} B per messaging buffer")
print(f"{'t (s)':>6} {'outgoing':>9} {'incoming':>9} {'application':>12} {'512-bit draw':>13}")
for t_ms in range(0, 701, 50):
    store.pump(t_ms * 1000)
    try:
        store.draw_application(512, ("probe", t_ms))
        drawn = "ok"
    except KeyStarved:
        drawn = "starved"
    print(f"{t_ms / 1000:>6.2f} {store.outgoing_bytes:>9} {store.incoming_bytes:>9} "
          f"{store.application_bytes:>12} {drawn:>13}")

fill_time = 2 * THRESHOLD * 8 / RATE
print(f"\nthreshold fill time: 2 x {THRESHOLD} B x 8 / {RATE} = {fill_time:.3f} s")

print("\n== the same effect end to end: first key change waits for the fill ==")
cfg = SimConfig(
    sim_time_s=10.0,
    drop_prob=0.0,
    keystore=KeystoreConfig(rate_bits_per_s=RATE, seed=7, threshold_bytes=THRESHOLD),
    protocol=ProtocolConfig(window=5, rekey_interval_ms=100),
)
metrics = run(cfg, 0, 1)
print(f"session established at {metrics.established_at_us / 1e6:.3f} s "
      f"(> {fill_time:.3f} s fill time), {metrics.key_changes} key changes by t=10 s")
