"""Run the alpha x m sweep of configs/pme_sweep.toml and print the margins
of every estimate."""
import argparse
import csv
from pathlib import Path

from subdual.config import load_config
from subdual.experiments import sweep

ROOT = Path(__file__).resolve().parents[1]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", type=Path, default=ROOT / "configs" / "pme_sweep.toml")
    parser.add_argument("--out", type=Path, default=ROOT / "out" / "pme_sweep")
    parser.add_argument("--workers", type=int, default=1)
    args = parser.parse_args()
    code = sweep(load_config(args.config), args.out, args.workers)
    rows = list(csv.DictReader(open(args.out / "summary.csv")))
    margins = sorted(k for k in rows[0] if k.endswith(".margin"))
    print(f"{'alpha':>6} {'m':>4} " + " ".join(f"{k[:-7]:>12}" for k in margins))
    for row in rows:
        cells = " ".join(f"{float(row[k]):12.4e}" for k in margins)
        print(f"{float(row['alpha']):6.2f} {float(row['m']):4.1f} {cells}")
    print(f"exit code {code}")
    raise SystemExit(code)


if __name__ == "__main__":
    main()
