"""Max-norm errors of the manufactured Dirichlet and periodic problems under
simultaneous refinement of the time step and mesh width."""
import argparse
from dataclasses import dataclass, field

from subdual.grids import TimeGrid
from subdual.solver import manufactured_dirichlet, max_error, solve
from subdual.spectral import SpectralOperator, manufactured_periodic, solve_nonlocal_pme


@dataclass
class Study:
    alphas: list = field(default_factory=lambda: [0.3, 0.5, 0.8])
    levels: int = 5
    steps: int = 16
    points: int = 8
    beta: float = 1.0


def dirichlet_rows(study: Study):
    for alpha in study.alphas:
        prev = None
        for lvl in range(study.levels):
            N, M = study.steps * 2 ** lvl, study.points * 2 ** lvl
            spec, exact = manufactured_dirichlet(alpha, N, M)
            err = max_error(solve(spec), exact)
            yield "dirichlet", alpha, N, M, err, (prev / err if prev else float("nan"))
            prev = err


def periodic_rows(study: Study):
    opr = SpectralOperator(2.0, 32, study.beta)
    for alpha in study.alphas:
        prev = None
        for lvl in range(study.levels):
            N = study.steps * 2 ** lvl
            spec, exact = manufactured_periodic(opr, alpha, TimeGrid(1.0, N))
            err = max_error(solve_nonlocal_pme(spec), exact)
            yield "periodic", alpha, N, opr.M, err, (prev / err if prev else float("nan"))
            prev = err


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--levels", type=int, default=Study.levels)
    parser.add_argument("--alphas", type=float, nargs="+", default=[0.3, 0.5, 0.8])
    args = parser.parse_args()
    study = Study(alphas=args.alphas, levels=args.levels)
    print(f"{'problem':>10} {'alpha':>6} {'N':>6} {'M':>5} {'error':>12} {'ratio':>6}")
    for rows in (dirichlet_rows(study), periodic_rows(study)):
        for name, alpha, N, M, err, ratio in rows:
            print(f"{name:>10} {alpha:6.2f} {N:6d} {M:5d} {err:12.4e} {ratio:6.2f}")


if __name__ == "__main__":
    main()
