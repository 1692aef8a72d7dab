#!/usr/bin/env python3
"""Signature-throughput benchmark: synthetic cells across many slides.

Usage:
    python scripts/benchmark_signatures.py [--cells 1000000] [--slides 100]
"""

import argparse
import os
import sys
import time

from cellnn import synth
from cellnn.signature import compute_signatures


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--cells", type=int, default=1_000_000)
    ap.add_argument("--slides", type=int, default=100)
    ap.add_argument("--k", type=int, default=10)
    ap.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    ap.add_argument("--leaf-size", type=int, default=16)
    args = ap.parse_args(argv)

    per_slide = args.cells // args.slides
    spec = synth.TissueSpec(
        groups=("bench",), slides_per_group=args.slides,
        cells_per_slide=per_slide,
        mixture=(0.05, 0.4, 0.25, 0.1, 0.05, 0.15),
        box_size=20000.0, seed=9)
    t0 = time.perf_counter()
    cohort = synth.generate_tissue(spec)
    t1 = time.perf_counter()
    assignment = compute_signatures(cohort, k=args.k, threads=args.threads,
                                    leaf_size=args.leaf_size)
    t2 = time.perf_counter()
    rate = len(cohort) / (t2 - t1)
    print(f"generated {len(cohort):,} cells in {t1 - t0:.1f}s")
    print(f"signatures (k={args.k}, threads={args.threads}, leaf={args.leaf_size}): "
          f"{t2 - t1:.1f}s  ({rate:,.0f} cells/s), retained {assignment.n_retained():,}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
