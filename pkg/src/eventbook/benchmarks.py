"""Solver benchmark harness: ``python -m eventbook.benchmarks``.

Times the block Levinson recursion against the dense Cholesky oracle on
random SPD block-Toeplitz systems across sizes and writes a CSV of the
timings (columns num_blocks, block_dim, levinson_s, dense_s, speedup).
"""
from __future__ import annotations

import argparse
import csv
import sys

from .calib import benchmark_solvers


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="eventbook-bench")
    parser.add_argument("--sizes", default="32,64,128,256,512", help="comma list of block counts p")
    parser.add_argument("--block-dim", dest="block_dim", type=int, default=2)
    parser.add_argument("--repeats", type=int, default=3)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", default="solver_benchmark.csv")
    ns = parser.parse_args(argv)

    sizes = [int(s) for s in ns.sizes.split(",")]
    rows = benchmark_solvers(sizes, block_dim=ns.block_dim, repeats=ns.repeats, seed=ns.seed)
    with open(ns.out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    for row in rows:
        print(
            f"p={row['num_blocks']:4d} d={row['block_dim']}  "
            f"levinson {row['levinson_s'] * 1e3:8.2f} ms  "
            f"dense {row['dense_s'] * 1e3:8.2f} ms  "
            f"speedup {row['speedup']:.2f}x"
        )
    print(f"wrote {ns.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
