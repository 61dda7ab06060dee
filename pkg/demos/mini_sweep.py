#!/usr/bin/env python3
"""A scaled-down parameter sweep, aggregated and written as CSV.

The full published grid is 64 combinations x 30 runs of 600 s each
(`qrekey sweep --paper-table`); this narrative version sweeps a 2x2x1
corner with short runs so it finishes in seconds, then shows the same
aggregation, CSV schema and figure rendering the real sweep uses.
"""

import subprocess
import sys
from pathlib import Path

from qrekey.harness import sweep, write_csv
from qrekey.netsim import SimConfig

grid = [(w, i, 1.5) for w in (5, 15) for i in (25, 100)]
base = SimConfig(sim_time_s=60.0)

print(f"running {len(grid)} combinations x 5 runs of 60 s ...")
points = sweep(grid, base, seed=7, runs=5)

print(f"\n{'W':>3} {'interval':>9} {'deciphered':>18} {'effective rate':>16}")
for p in points:
    print(f"{p.window:>3} {p.interval_ms:>6} ms "
          f"{p.deciphered_mean:>10.4f} +- {p.deciphered_ci95:.4f} "
          f"{p.effrate_mean_bps / 1e6:>10.4f} Mbps")

out = Path("mini_sweep.csv")
write_csv(points, str(out))
print(f"\nwrote {out} ({out.stat().st_size} bytes)")

render = Path(__file__).resolve().parent.parent / "plots" / "render.py"
fig = Path("mini_sweep_deciphered_w5.png")
proc = subprocess.run(
    [sys.executable, str(render), "--csv", str(out), "--metric", "deciphered",
     "--fix-w", "5", "--out", str(fig)],
    capture_output=True, text=True,
)
print(proc.stdout.strip() or proc.stderr.strip())
