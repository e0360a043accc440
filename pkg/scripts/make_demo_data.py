#!/usr/bin/env python3
"""Generate an offline demo dataset in the wine layout.

Writes <out>/winequality-white.csv with synthetic numbers (11 features,
noisy nonlinear target), so the CLI can be exercised end to end on a
machine without network access:

    python scripts/make_demo_data.py --out demo_data
    dualgrad train --dataset wine --method our --layers 2 --samples 100 \\
        --seed 1 --data-dir demo_data --out runs

This is stand-in data for demos and smoke tests only; benchmark numbers
from it say nothing about the real wine-quality dataset.
"""

import argparse
import sys
from pathlib import Path

import numpy as np


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", type=Path, default=Path("demo_data"))
    parser.add_argument("--rows", type=int, default=3000)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    rng = np.random.Generator(np.random.PCG64(args.seed))
    x = rng.uniform(-2.5, 2.5, (args.rows, 11))
    quality = (
        1.2 * x[:, 0] - 0.8 * x[:, 1] + 0.6 * x[:, 2] * x[:, 3]
        + rng.normal(0, 4.0, args.rows)
    )

    args.out.mkdir(parents=True, exist_ok=True)
    dest = args.out / "winequality-white.csv"
    header = [f"feature_{i}" for i in range(11)] + ["quality"]
    with open(dest, "w") as f:
        f.write(";".join(header) + "\n")
        for row, q in zip(x, quality):
            f.write(";".join(f"{v:.6f}" for v in row) + f";{q:.6f}\n")
    print(f"wrote {dest} ({args.rows} rows)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
