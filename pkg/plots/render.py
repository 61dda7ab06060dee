#!/usr/bin/env python3
"""Render sweep figures from a harness CSV.

Consumes only the CSV written by `qrekey sweep` / `qrekey simulate`
(fixed 11-column schema); no simulator internals.  One chart per
invocation: the chosen metric against the rekey interval, one error-bar
series per data rate (with --fix-w) or per window size (with
--fix-rate).

    plots/render.py --csv out.csv --metric deciphered --fix-w 5 \
        --out fig_deciphered_w5.png
"""

from __future__ import annotations

import argparse
import csv
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

EXPECTED_HEADER = [
    "W", "interval_ms", "app_rate_mbps", "runs",
    "deciphered_mean", "deciphered_ci95", "oos_mean", "oos_ci95",
    "effrate_mean_bps", "effrate_ci95", "resets_mean",
]

METRICS = {
    "deciphered": ("deciphered_mean", "deciphered_ci95", "deciphered / sent"),
    "oos": ("oos_mean", "oos_ci95", "out-of-sync / received"),
    "effrate": ("effrate_mean_bps", "effrate_ci95", "effective rate (bit/s)"),
}


class SchemaError(ValueError):
    pass


def load_rows(path: str) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != EXPECTED_HEADER:
            raise SchemaError(f"{path}: header does not match the sweep schema")
        rows = []
        for raw in reader:
            if len(raw) != len(EXPECTED_HEADER):
                raise SchemaError(f"{path}: malformed row {raw!r}")
            row = dict(zip(EXPECTED_HEADER, raw))
            rows.append(
                {
                    "W": int(row["W"]),
                    "interval_ms": int(row["interval_ms"]),
                    "app_rate_mbps": float(row["app_rate_mbps"]),
                    **{k: float(row[k]) for k in EXPECTED_HEADER[3:]},
                }
            )
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    return rows


def render(rows: list[dict], metric: str, fix_w: int | None, fix_rate: float | None, out: str) -> int:
    """Draw the chart; returns the number of plotted points."""
    mean_col, ci_col, ylabel = METRICS[metric]
    if fix_w is not None:
        rows = [r for r in rows if r["W"] == fix_w]
        series_key, series_label = "app_rate_mbps", "{} Mbps"
        title = f"{metric} vs rekey interval, W={fix_w}"
    else:
        rows = [r for r in rows if abs(r["app_rate_mbps"] - fix_rate) < 1e-9]
        series_key, series_label = "W", "W={}"
        title = f"{metric} vs rekey interval, {fix_rate} Mbps"
    if not rows:
        raise SchemaError("no rows match the selection")

    plt.rcParams.update({"figure.figsize": (7.0, 4.5), "font.size": 10, "svg.hashsalt": "qrekey"})
    fig, ax = plt.subplots()
    plotted = 0
    for key in sorted({r[series_key] for r in rows}):
        group = sorted((r for r in rows if r[series_key] == key), key=lambda r: r["interval_ms"])
        xs = [r["interval_ms"] for r in group]
        ys = [r[mean_col] for r in group]
        errs = [r[ci_col] for r in group]
        ax.errorbar(xs, ys, yerr=errs, marker="o", capsize=3, label=series_label.format(key))
        plotted += len(xs)
    ax.set_xlabel("rekey interval (ms)")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.set_xticks(sorted({r["interval_ms"] for r in rows}))
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(out, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return plotted


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--csv", required=True)
    parser.add_argument("--metric", required=True, choices=sorted(METRICS))
    group = parser.add_mutually_exclusive_group(required=True)
    group.add_argument("--fix-w", type=int, help="filter to one window size, series per rate")
    group.add_argument("--fix-rate", type=float, help="filter to one data rate, series per window")
    parser.add_argument("--out", required=True, help="output raster image path")
    args = parser.parse_args(argv)
    try:
        rows = load_rows(args.csv)
        points = render(rows, args.metric, args.fix_w, args.fix_rate, args.out)
    except (SchemaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {args.out} points={points}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
