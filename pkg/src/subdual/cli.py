"""Command line entry point (``subdual`` or ``python -m subdual``)."""
from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from .config import load_config
from .errors import ConfigError
from .experiments import EXIT_FAILED, EXIT_OK, EXIT_STAGE, StageError, execute, fmt, run, sweep, write_reaction


def _common() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML run configuration")
    common.add_argument("--out", type=Path, help="output file or directory")
    common.add_argument("--workers", type=int, default=None, help="parallel sweep workers")
    common.add_argument("--seed", type=int, default=None, help="seed for randomized checks")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="subdual", description=__doc__, parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("resolvent", parents=[common], help="tabulate s, r, h and k_gamma")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--steps", type=int, default=1024)
    p.add_argument("--T", type=float, default=1.0)

    p = sub.add_parser("identities", parents=[common], help="residuals of the duality identities")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--steps", type=int, default=512)
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--regularization", type=int, default=8, help="index n of the bounded kernel k_n")

    sub.add_parser("solve", parents=[common], help="solve a scalar problem, write t,x,u")
    sub.add_parser("react", parents=[common], help="simulate the reaction system")
    p = sub.add_parser("verify", parents=[common], help="run one estimate and write its report")
    p.add_argument("--estimate", required=True)
    sub.add_parser("run", parents=[common], help="full pipeline of a configuration")
    sub.add_parser("sweep", parents=[common], help="parameter sweep")
    return parser


def _write_csv(path, header, columns):
    if path is None:
        writer = csv.writer(sys.stdout, lineterminator="\n")
        fh = None
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        fh = open(path, "w", newline="")
        writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(header)
    for row in zip(*columns):
        writer.writerow([fmt(v) for v in row])
    if fh:
        fh.close()


def cmd_resolvent(args) -> int:
    from .grids import TimeGrid
    from .kernels import standard_pair
    from .resolvent import resolvent_family

    grid = TimeGrid(args.T, args.steps)
    fam = resolvent_family(standard_pair(args.alpha).l, args.gamma, grid)
    k_reg = fam.k_reg.value(grid.right_nodes)
    _write_csv(args.out, ["t", "s", "r", "h", "k_reg"], [grid.right_nodes, fam.s, fam.r, fam.h, k_reg])
    return EXIT_OK


def identity_table(alpha: float, steps: int, T: float = 1.0, n: int = 8, seed: int = 0):
    """Rows ``(identity, N, residual)`` at one resolution."""
    from .convolution import (ConvOperator, check_fundamental_identity, check_integrodiff_duality,
                              check_successive_dual, duality_defect)
    from .grids import TimeGrid
    from .kernels import ExpShifted, Standard, standard_pair
    from .resolvent import regularized_kernel

    grid = TimeGrid(T, steps)
    pair = standard_pair(alpha)
    rng = np.random.default_rng(seed)
    f, g = rng.standard_normal(steps), rng.standard_normal(steps)
    op = ConvOperator.from_kernel(pair.k, grid)
    k_n = regularized_kernel(pair, n, grid)
    return [
        ("duality", steps, duality_defect(op, f, g)),
        ("successive_dual", steps, check_successive_dual(pair.l, pair.k, lambda t: np.sin(3 * t) + t * t, grid)),
        ("integrodiff_duality", steps, check_integrodiff_duality(k_n, lambda t: t * t, lambda t: np.cos(3 * t), grid)),
        ("fundamental_identity", steps, check_fundamental_identity(k_n, lambda t: np.sin(3 * t) + t, grid)),
        ("fundamental_identity_exp", steps, check_fundamental_identity(ExpShifted(0.0, 1.0), lambda t: t, grid)),
    ]


def cmd_identities(args) -> int:
    rows = identity_table(args.alpha, args.steps, args.T, args.regularization, args.seed or 0)
    _write_csv(args.out, ["identity", "N", "residual"], list(zip(*rows)))
    return EXIT_OK


def _config(args):
    if args.config is None:
        raise ConfigError("--config is required for this command")
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.data["seed"] = args.seed
    if args.workers is not None:
        cfg.data["workers"] = args.workers
    return cfg


def cmd_solve(args) -> int:
    from .experiments import _solve_stage, write_trajectory

    cfg = _config(args)
    try:
        _, fld = _solve_stage(cfg)
    except Exception as exc:  # noqa: BLE001
        raise StageError("solver", exc) from exc
    out = args.out or cfg.resolve(cfg.data["output"]) / "trajectory.csv"
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    write_trajectory(Path(out), fld)
    return EXIT_OK


def cmd_react(args) -> int:
    from .config import build_reaction
    from .reaction import simulate

    cfg = _config(args)
    if cfg.kind != "reaction":
        raise ConfigError("configuration has no [reaction] block")
    try:
        run_ = simulate(*build_reaction(cfg))
    except Exception as exc:  # noqa: BLE001
        raise StageError("react", exc) from exc
    write_reaction(args.out or cfg.resolve(cfg.data["output"]) / "reaction", run_)
    return EXIT_OK


def cmd_verify(args) -> int:
    import json

    cfg = _config(args)
    cfg = cfg.with_overrides({"verify": [args.estimate]})
    result = execute(cfg, write=False)
    payload = [r.to_dict() for r in result.reports]
    text = json.dumps(payload[0] if len(payload) == 1 else payload, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return result.exit_code


def cmd_run(args) -> int:
    cfg = _config(args)
    return run(cfg, args.out)


def cmd_sweep(args) -> int:
    cfg = _config(args)
    return sweep(cfg, args.out, args.workers)


COMMANDS = {"resolvent": cmd_resolvent, "identities": cmd_identities, "solve": cmd_solve, "react": cmd_react,
            "verify": cmd_verify, "run": cmd_run, "sweep": cmd_sweep}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        for err in exc.errors:
            print(f"config error: {err}", file=sys.stderr)
        print("config stage failed", file=sys.stderr)
        return EXIT_STAGE
    except StageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
