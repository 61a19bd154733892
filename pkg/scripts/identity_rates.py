"""Residuals of the discrete duality identities across grid refinements."""
import argparse

from subdual.cli import identity_table


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--alpha", type=float, default=0.5)
    parser.add_argument("--steps", type=int, nargs="+", default=[256, 512, 1024, 2048])
    parser.add_argument("--regularization", type=int, default=8)
    args = parser.parse_args()
    tables = [identity_table(args.alpha, N, n=args.regularization) for N in args.steps]
    names = [row[0] for row in tables[0]]
    print(f"{'identity':>26} " + " ".join(f"{N:>10d}" for N in args.steps))
    for i, name in enumerate(names):
        values = [t[i][2] for t in tables]
        print(f"{name:>26} " + " ".join(f"{v:10.3e}" for v in values))
        rates = [a / b if b else float("inf") for a, b in zip(values, values[1:])]
        print(f"{'ratio':>26} {'':>10} " + " ".join(f"{r:10.2f}" for r in rates))


if __name__ == "__main__":
    main()
