"""Rapid-rekeying key synchronization for QKD-fed IPsec-style links.

The package is organized around the lifecycle of a rekeyed link:

* :mod:`qrekey.chain` -- salted-hash SPI sequence both peers derive
  independently from a shared seed.
* :mod:`qrekey.keystore` -- Q3P-style buffered key store fed by a
  (rate-limited or infinite) key source.
* :mod:`qrekey.dataplane` -- mock SA database: one outbound SA per
  channel, a bounded window of inbound SAs.
* :mod:`qrekey.wire` -- fixed-size binary control frames.
* :mod:`qrekey.protocol` -- master/slave rekeying state machines,
  reset and control-channel rekey handshakes.
* :mod:`qrekey.netsim` -- deterministic discrete-event simulator of a
  two-host link with delay, loss and a bounded FIFO queue.
* :mod:`qrekey.harness` -- parameter sweep, CSV output, acceptance
  checks.
* :mod:`qrekey.planner` -- key-period arithmetic (minimum period,
  data-bits-per-key-bit ratio, birthday and attack bounds).
"""

__version__ = "0.1.0"

HASH_NAME = "sha256"
"""Hash used for the SPI chain, fixed project-wide."""
