"""Relaxation function against its closed form and the L1 distance of the
bounded kernels k_n from the singular kernel."""
import argparse
from dataclasses import dataclass

import numpy as np
from scipy import special

from subdual.grids import TimeGrid
from subdual.kernels import standard_pair
from subdual.resolvent import l1_distance, regularized_identity_gap, regularized_kernel, resolvent_family


@dataclass
class Table:
    alpha: float = 0.5
    T: float = 1.0
    steps: tuple = (128, 256, 512, 1024, 2048)
    indices: tuple = (1, 4, 16, 64, 256)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--steps", type=int, default=2048, help="grid used for the k_n table")
    args = parser.parse_args()
    table = Table()
    pair = standard_pair(table.alpha)
    print("relaxation s_1 against erfcx(sqrt t)")
    for N in table.steps:
        grid = TimeGrid(table.T, N)
        fam = resolvent_family(pair.l, 1.0, grid)
        err = np.max(np.abs(fam.s - special.erfcx(np.sqrt(grid.right_nodes))))
        print(f"  N={N:5d}  max error {err:.3e}  |h - r| {np.max(np.abs(fam.h - fam.r)):.1e}")
    grid = TimeGrid(table.T, args.steps)
    print(f"bounded kernels on N={args.steps}")
    for n in table.indices:
        k_n = regularized_kernel(pair, n, grid)
        gap = regularized_identity_gap(pair, n, grid)
        print(f"  n={n:4d}  ||k_n - k||_1 {l1_distance(k_n, pair.k, grid):.4e}  max|k_n - k*h_n| {gap:.3e}")


if __name__ == "__main__":
    main()
