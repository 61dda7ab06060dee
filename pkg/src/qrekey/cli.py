"""Command-line interface.

Subcommands:

* ``chain``    -- print SPIs from a seed and salt (golden-file testable)
* ``plan``     -- key-period boundary table for a link/cipher profile
* ``simulate`` -- run one configured combination, write CSV
* ``sweep``    -- run the published 64-combination grid, write CSV
* ``check``    -- evaluate sweep-derived acceptance criteria from a CSV
"""

from __future__ import annotations

import argparse
import json
import sys
import time

from . import harness, netsim, planner
from .chain import SALT_LEN, step_value, validate_spi


def _cmd_chain(args) -> int:
    seed = int(args.seed, 16)
    salt = bytes.fromhex(args.salt)
    if len(salt) != SALT_LEN:
        print(f"salt must be {SALT_LEN * 2} hex digits", file=sys.stderr)
        return 2
    validate_spi(seed)
    value = seed
    for n in range(args.count):
        if n:
            value = step_value(value, salt)
        print(f"{value:08x}")
    return 0


def _cmd_plan(args) -> int:
    link = planner.LinkProfile(
        qkd_rate_bits_per_s=args.qkd_rate,
        data_rate_bits_per_s=args.data_rate,
        bidirectional=not args.unidirectional,
    )
    cipher = planner.CipherProfile(key_bits=args.key_bits, block_bits=args.block_bits)
    period = planner.min_key_period(link, cipher)
    ratio = planner.dpk(link)
    bd_vol = planner.birthday_limit(cipher, args.data_rate, "block-volume")
    bd_compat = planner.birthday_limit(cipher, args.data_rate, "paper-compat")
    attack = planner.attack_limit(args.attack_blocks, args.block_bits, args.data_rate)
    rows = [
        ("min key period", f"{period * 1000:.4f} ms ({'bi' if link.bidirectional else 'uni'}directional)"),
        ("data bits per key bit (dpk)", f"{ratio:.4f}"),
        ("birthday limit (block-volume)", f"{bd_vol:.4f} s"),
        ("birthday limit (paper-compat)", f"{bd_compat:.4f} s"),
        ("attack limit (exact)", f"{attack.exact_seconds:.4f} s"),
        ("attack limit (power-of-two)", f"{attack.pow2_seconds:.4f} s"),
        ("recommended max period", f"{attack.recommended_seconds:.1f} s"),
        ("protocol-suite ceiling", f"{attack.ipsec_ceiling_seconds:.0f} s"),
    ]
    width = max(len(r[0]) for r in rows)
    for label, value in rows:
        print(f"{label:<{width}}  {value}")
    return 0


def _load_config(path: str | None) -> netsim.SimConfig:
    if path is None:
        return netsim.SimConfig()
    with open(path) as fh:
        return netsim.config_from_dict(json.load(fh))


def _cmd_simulate(args) -> int:
    cfg = _load_config(args.config)
    print(netsim.config_to_json(cfg))
    metrics = [netsim.run(cfg, run_index=i, master_seed=args.seed) for i in range(cfg.runs)]
    point = harness.aggregate(
        cfg.protocol.window, int(cfg.protocol.rekey_interval_ms), cfg.app_rate_bps / 1e6, metrics
    )
    harness.write_csv([point], args.csv)
    last = metrics[-1]
    print(f"runs={cfg.runs} seed={args.seed} -> {args.csv}")
    print(
        f"last run: sent={last.sent} deciphered={last.deciphered} out_of_sync={last.out_of_sync} "
        f"dropped_loss={last.dropped_loss} dropped_queue={last.dropped_queue} resets={last.resets}"
    )
    return 0


def _cmd_sweep(args) -> int:
    if not args.paper_table:
        print("only --paper-table sweeps are supported", file=sys.stderr)
        return 2
    base = _load_config(args.config)
    print(netsim.config_to_json(base))
    jobs = args.jobs or harness.default_jobs()
    started = time.time()

    def progress(done: int, total: int) -> None:
        if done % 64 == 0 or done == total:
            elapsed = time.time() - started
            print(f"  {done}/{total} runs, {elapsed:.0f}s elapsed", file=sys.stderr)

    points = harness.sweep(
        harness.paper_grid(), base, seed=args.seed, runs=args.runs, jobs=jobs, progress=progress
    )
    harness.write_csv(points, args.csv)
    print(f"{len(points)} combinations x {args.runs} runs -> {args.csv}")
    return 0


def _cmd_check(args) -> int:
    points = harness.read_csv(args.csv)
    results = harness.check_acceptance(points)
    failed = False
    for r in results:
        print(f"[{r.status}] {r.name}: {r.detail}")
        if r.status != "PASS":
            failed = True
    return 1 if failed else 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="qrekey", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("chain", help="print SPIs derived from a seed and salt")
    p.add_argument("--seed", required=True, help="8 hex digits (32-bit initial SPI)")
    p.add_argument("--salt", required=True, help="32 hex digits (16-byte salt)")
    p.add_argument("--count", type=int, required=True)
    p.set_defaults(fn=_cmd_chain)

    p = sub.add_parser("plan", help="key-period boundary table")
    p.add_argument("--qkd-rate", type=float, required=True, help="quantum key rate, bits/s")
    p.add_argument("--key-bits", type=int, required=True)
    p.add_argument("--block-bits", type=int, required=True)
    p.add_argument("--data-rate", type=float, required=True, help="data rate, bits/s")
    p.add_argument("--unidirectional", action="store_true")
    p.add_argument("--attack-blocks", type=float, default=float(2**32),
                   help="plaintext blocks the reference attack needs")
    p.set_defaults(fn=_cmd_plan)

    p = sub.add_parser("simulate", help="run one configured combination")
    p.add_argument("--config", required=True, help="JSON run configuration")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--csv", required=True)
    p.set_defaults(fn=_cmd_simulate)

    p = sub.add_parser("sweep", help="run the full published parameter grid")
    p.add_argument("--paper-table", action="store_true")
    p.add_argument("--config", default=None, help="base JSON configuration (defaults if omitted)")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--csv", required=True)
    p.add_argument("--runs", type=int, default=30)
    p.add_argument("--jobs", type=int, default=None)
    p.set_defaults(fn=_cmd_sweep)

    p = sub.add_parser("check", help="evaluate acceptance criteria from a sweep CSV")
    p.add_argument("--csv", required=True)
    p.set_defaults(fn=_cmd_check)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
