"""Run and sweep orchestration: solve or simulate, verify, and persist."""
from __future__ import annotations

import csv
import hashlib
import itertools
import json
import math
import time as _time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import estimates as est
from .config import RunConfig, build_exact, build_problem, build_reaction, validate
from .errors import ConfigError

EXIT_OK, EXIT_FAILED, EXIT_STAGE = 0, 1, 2
UNIQUENESS_GAP = 1e-8


def fmt(x) -> str:
    """Float formatting with 17 significant digits."""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "%.17g" % float(x)
    return str(x)


def run_id(cfg: RunConfig) -> str:
    blob = json.dumps(cfg.data, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"{stage} stage failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class RunResult:
    exit_code: int
    reports: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    field: object = None
    reaction: object = None
    problem: object = None


def write_trajectory(path: Path, fld, exact=None):
    space = fld.space
    coords = space.coordinates
    rows = []
    for i, t in enumerate(fld.time.nodes):
        cols = [np.full(space.size, t), *coords, fld.values[i]]
        rows.append(np.column_stack(cols))
    header = ["t", "x"] + (["y"] if space.dimension == 2 else []) + ["u"]
    np.savetxt(path, np.vstack(rows), delimiter=",", fmt="%.17g", header=",".join(header), comments="")


def write_report(path: Path, report):
    path.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")


def _galpha_reports(cfg: RunConfig, time):
    alpha = cfg.data["kernel"]["alpha"]
    rng = np.random.default_rng(cfg.seed)
    worst = None
    count = failed = 0
    for _ in range(cfg.data["estimates"]["galpha_samples"]):
        v = rng.standard_normal(time.N)
        rep = est.verify_galpha(v, alpha, time)
        count += 1
        failed += not rep.passed
        if worst is None or rep.margin / max(rep.rhs, 1e-300) < worst.margin / max(worst.rhs, 1e-300):
            worst = rep
    worst.metadata.update({"samples": count, "failed_samples": failed, "seed": cfg.seed})
    worst.passed = worst.passed and failed == 0
    return [worst]


def _solve_stage(cfg: RunConfig):
    from .solver import solve

    spec = build_problem(cfg)
    return spec, solve(spec)


def execute(cfg: RunConfig, out_dir=None, write=True) -> RunResult:
    """Solve (or simulate), verify every requested estimate and write
    artifacts.  Stage failures raise :class:`StageError`."""
    t0 = _time.perf_counter()
    out = Path(out_dir or cfg.resolve(cfg.data["output"]))
    if write:
        out.mkdir(parents=True, exist_ok=True)
    result = RunResult(EXIT_OK)
    companion = cfg.data["estimates"]["companion"]
    metrics = {}
    if cfg.kind == "reaction":
        try:
            from .reaction import simulate

            spec, pair, time, space, opts = build_reaction(cfg)
            run = simulate(spec, pair, time, space, opts)
        except Exception as exc:  # noqa: BLE001 - reported with stage name
            raise StageError("react", exc) from exc
        result.reaction = run
        metrics["min_concentration"] = float(run.min_concentration.min())
        if write:
            write_reaction(out / "reaction", run)
    else:
        try:
            spec, fld = _solve_stage(cfg)
        except Exception as exc:  # noqa: BLE001
            raise StageError("solver", exc) from exc
        result.field, result.problem = fld, spec
        exact = build_exact(cfg)
        if exact is not None:
            from .solver import max_error

            metrics["max_error"] = max_error(fld, exact)
        if write:
            write_trajectory(out / "trajectory.csv", fld)
    reports = []
    try:
        for name in cfg.verify:
            if name == "galpha":
                from .grids import TimeGrid

                g = cfg.data["grid"]
                reports += _galpha_reports(cfg, TimeGrid(g["T"], g["steps"]))
            elif name == "entropy":
                reports.append(est.verify_entropy(result.reaction, companion))
            elif name == "pme":
                reports.append(est.verify_pme(result.field, result.problem, companion))
            elif name == "spectral":
                reports += list(est.verify_spectral(result.field, result.problem, companion))
            elif name == "uniqueness":
                from .solver import solve

                other = solve(result.problem, method="picard")
                rep = est.uniqueness_gap(result.problem, ("newton", "picard"), (result.field, other))
                report = est.EstimateReport("uniqueness", rep.gap, UNIQUENESS_GAP, {
                    "lhs": {"gap": rep.gap}, "rhs": {"allowed_gap": UNIQUENESS_GAP}},
                    {"pairing": rep.pairing, "methods": list(rep.methods)})
                report.passed = report.passed and rep.passed
                reports.append(report)
            else:
                reports.append(est.verify_basic_field(result.field, result.problem, name, companion))
    except StageError:
        raise
    except Exception as exc:  # noqa: BLE001
        raise StageError("verify", exc) from exc
    result.reports = reports
    passed = sum(r.passed for r in reports)
    result.exit_code = EXIT_OK if passed == len(reports) else EXIT_FAILED
    result.summary = {
        "run_id": run_id(cfg), "wall_time": _time.perf_counter() - t0, "passed": passed,
        "failed": len(reports) - passed, "reports": {r.estimate: {"margin": r.margin, "passed": r.passed}
                                                      for r in reports},
        "metrics": metrics,
    }
    if write:
        for r in reports:
            write_report(out / f"report_{r.estimate}.json", r)
        (out / "summary.json").write_text(json.dumps(est._jsonable(result.summary), indent=2, sort_keys=True) + "\n")
    return result


def run(cfg: RunConfig, out_dir=None) -> int:
    """Execute a configuration; returns the process exit code."""
    try:
        return execute(cfg, out_dir).exit_code
    except StageError as exc:
        print(str(exc), flush=True)
        return EXIT_STAGE


def write_reaction(prefix: Path, run):
    from .reaction import combination_residual, entropy_density

    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    for i, fld in enumerate(run.fields):
        write_trajectory(Path(f"{prefix}_c{i + 1}.csv"), fld)
    res = np.abs(combination_residual(run)).max(axis=1)
    C = run.values
    if C.min() > 0:
        ent = run.space.integral(entropy_density(C).sum(axis=0))
    else:
        ent = np.full(run.time.N + 1, np.nan)
    cols = [run.time.nodes, *run.min_concentration.T, np.concatenate([[0.0], res]), ent]
    header = "t,min_c1,min_c2,min_c3,min_c4,u_residual,entropy"
    np.savetxt(f"{prefix}_diagnostics.csv", np.column_stack(cols), delimiter=",", fmt="%.17g",
               header=header, comments="")


# -- sweeps -----------------------------------------------------------------------

def sweep_cells(cfg: RunConfig) -> list:
    """All parameter combinations, sorted lexicographically by value."""
    axes = sorted(cfg.sweep)
    product = list(itertools.product(*[cfg.sweep[a] for a in axes])) or [()]
    zkeys = sorted(cfg.sweep_zip)
    zipped = list(zip(*[cfg.sweep_zip[k] for k in zkeys])) or [()]
    cells = []
    for combo in product:
        for z in zipped:
            cells.append(dict(zip(axes + zkeys, combo + z)))
    keys = axes + zkeys
    cells.sort(key=lambda c: tuple(c[k] for k in keys))
    return cells


def _sweep_worker(args):
    data, base_dir, overrides, cell_dir = args
    t0 = _time.perf_counter()
    row = {"status": "ok"}
    try:
        cfg = validate(data, Path(base_dir)).with_overrides(overrides)
        res = execute(cfg, cell_dir, write=cell_dir is not None)
        row["exit_code"] = res.exit_code
        for r in res.reports:
            row[f"{r.estimate}.margin"] = r.margin
            row[f"{r.estimate}.passed"] = r.passed
        row.update(res.summary.get("metrics", {}))
    except ConfigError as exc:
        row.update(status="failed:config", exit_code=EXIT_STAGE, error=str(exc))
    except StageError as exc:
        row.update(status=f"failed:{exc.stage}", exit_code=EXIT_STAGE, error=str(exc.cause))
    return row, _time.perf_counter() - t0


def sweep(cfg: RunConfig, out_dir=None, workers=None) -> int:
    """Run every sweep cell; write ``summary.csv`` (deterministic) and
    ``timings.json``.  Returns 0 iff every cell ran and passed."""
    out = Path(out_dir or cfg.resolve(cfg.data["output"]))
    out.mkdir(parents=True, exist_ok=True)
    cells = sweep_cells(cfg)
    base = dict(cfg.data)
    jobs = [(base, str(cfg.base_dir), cell, str(out / f"cell_{i:03d}")) for i, cell in enumerate(cells)]
    workers = workers or cfg.data["workers"]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_sweep_worker, jobs))
    else:
        outcomes = [_sweep_worker(j) for j in jobs]
    param_keys = sorted(cfg.sweep) + sorted(cfg.sweep_zip)
    extra = sorted({k for row, _ in outcomes for k in row} - {"status", "exit_code", "error"})
    header = ["cell"] + param_keys + ["status", "exit_code"] + extra + ["error"]
    with open(out / "summary.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i, (cell, (row, _)) in enumerate(zip(cells, outcomes)):
            values = [i] + [cell[k] for k in param_keys] + [row.get("status"), row.get("exit_code")]
            values += [row.get(k, "") for k in extra] + [row.get("error", "")]
            writer.writerow([fmt(v) for v in values])
    timings = [{"cell": i, **{k: cell[k] for k in param_keys}, "runtime": dt}
               for i, (cell, (_, dt)) in enumerate(zip(cells, outcomes))]
    (out / "timings.json").write_text(json.dumps(timings, indent=2) + "\n")
    codes = [row.get("exit_code", EXIT_STAGE) for row, _ in outcomes]
    if any(c == EXIT_STAGE for c in codes):
        return EXIT_STAGE
    return EXIT_OK if all(c == EXIT_OK for c in codes) else EXIT_FAILED
