"""Acceptance criteria 1-11.  Each test carries a ``criterion`` marker; the
terminal summary prints one PASS/FAIL line per criterion.  Run directly with
``python tests/test_acceptance.py`` or via pytest."""
import csv
import filecmp
import json
import shutil
import sys
from pathlib import Path

import numpy as np
import pytest
from scipy import special

from subdual.config import load_config
from subdual.convolution import ConvOperator, check_integrodiff_duality, check_successive_dual, duality_defect
from subdual.estimates import (gamma_alpha, monotone_pairing, pme_constant, uniqueness_gap, verify_entropy,
                               verify_galpha, verify_spectral)
from subdual.experiments import execute, sweep
from subdual.grids import SpaceGrid, TimeGrid
from subdual.kernels import MultiTerm, Standard, companion_kernel, eval_standard, pairing_residual, standard_pair
from subdual.reaction import ReactionSpec, combination_residual, mass_combination, reaction_vector, simulate
from subdual.resolvent import regularized_kernel, resolvent_family
from subdual.solver import Nonlinearity, ProblemSpec, StencilOperator, manufactured_dirichlet, max_error, solve
from subdual.spectral import SpectralOperator, solve_nonlocal_pme, spectral_problem

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
criterion = pytest.mark.criterion
MULTI = MultiTerm(((1.0, 0.3), (1.0, 0.7)))


def _rates(errors):
    return [a / b for a, b in zip(errors, errors[1:])]


@criterion(1, "discrete duality identity")
@pytest.mark.parametrize("kernel", [Standard(0.5), MULTI], ids=["g_0.5", "multi-term"])
def test_duality_identity(kernel):
    rng = np.random.default_rng(2024)
    op = ConvOperator.from_kernel(kernel, TimeGrid(1.0, 256))
    for _ in range(100):
        f, g = rng.standard_normal((2, 256))
        assert duality_defect(op, f, g) <= 1e-12 * np.linalg.norm(f) * np.linalg.norm(g)


@criterion(2, "successive dual and integro-differential duality refine")
def test_identity_refinement():
    Ns = (256, 512, 1024)
    pair = standard_pair(0.5)
    successive = [check_successive_dual(pair.l, pair.k, lambda t: np.cos(3 * t) + t * t, TimeGrid(1.0, N))
                  for N in Ns]
    integrodiff = []
    for N in Ns:
        grid = TimeGrid(1.0, N)
        k8 = regularized_kernel(pair, 8, grid)
        integrodiff.append(check_integrodiff_duality(k8, lambda t: t * t, lambda t: np.cos(3 * t), grid))
    print("successive", successive, "integro-differential", integrodiff)
    assert all(r >= 1.5 for r in _rates(successive))
    assert all(r >= 1.5 for r in _rates(integrodiff))


@criterion(3, "resolvent closed form and regularized kernels")
def test_resolvent_closed_form():
    grid = TimeGrid(1.0, 1024)
    fam = resolvent_family(standard_pair(0.5).l, 1.0, grid)
    assert np.max(np.abs(fam.s - special.erfcx(np.sqrt(grid.right_nodes)))) <= 1e-3
    assert np.max(np.abs(fam.h - fam.gamma * fam.r)) <= 1e-10
    for n in (1, 8, 64):
        k = regularized_kernel(standard_pair(0.5), n, grid)
        values = np.concatenate([[k.limit_at_zero()], k.value(grid.right_nodes)])
        assert np.all(values >= 0) and np.all(np.diff(values) <= 0)


@criterion(4, "companion kernel recovery")
def test_companion_recovery():
    grid = TimeGrid(1.0, 512)
    l = companion_kernel(Standard(0.5), grid)
    assert np.max(np.abs(l.node_values - eval_standard(0.5, grid.right_nodes))) <= 5e-3
    assert pairing_residual(MULTI, companion_kernel(MULTI, grid)) <= 1e-8


@criterion(5, "manufactured solution convergence")
@pytest.mark.parametrize("alpha", [0.3, 0.5, 0.8])
def test_manufactured_convergence(alpha):
    errors = []
    for N, M in ((16, 8), (32, 16), (64, 32), (128, 64)):
        spec, exact = manufactured_dirichlet(alpha, N, M)
        errors.append(max_error(solve(spec), exact))
    print(alpha, errors)
    assert all(r >= 1.5 for r in _rates(errors))


@criterion(6, "porous-medium estimate sweep and constants")
def test_pme_sweep(tmp_path):
    assert pme_constant(1.0) == 2.0
    assert pme_constant(2.0) == 128 / 27
    cfg = load_config(CONFIGS / "pme_sweep.toml")
    assert sweep(cfg, tmp_path, workers=1) == 0
    rows = list(csv.DictReader(open(tmp_path / "summary.csv")))
    assert len(rows) == 9
    for row in rows:
        assert row["status"] == "ok" and row["exit_code"] == "0"
        for name in ("pme", "basic", "basic-alt", "triple"):
            assert row[f"{name}.passed"] == "True"
    for cell in sorted(tmp_path.glob("cell_*")):
        for report in cell.glob("report_*.json"):
            r = json.loads(report.read_text())
            assert r["margin"] >= -1e-9 * abs(r["rhs"])


@criterion(7, "gamma_alpha inequality on random paths")
@pytest.mark.parametrize("alpha", [0.3, 0.5, 0.8])
def test_galpha(alpha):
    assert abs(gamma_alpha(0.5) - np.sqrt(2) / 2) <= 1e-15
    rng = np.random.default_rng(7)
    grid = TimeGrid(1.0, 128)
    for _ in range(1000):
        assert verify_galpha(rng.standard_normal(128), alpha, grid).passed


@criterion(8, "reaction system structure")
def test_reaction_system():
    space = SpaceGrid(1.0, 32, "neumann")
    pair, time = standard_pair(0.5), TimeGrid(1.0, 64)
    d = (1.0, 0.5, 2.0, 0.1)
    eq = ReactionSpec((1, 1, 1, 1), 2.0, 2.0, d, np.ones((4, space.size)))
    run = simulate(eq, pair, time, space)
    assert np.max(np.abs(run.values - 1.0)) <= 1e-11

    x = space.axis
    c0 = np.stack([1 + 0.5 * np.cos(np.pi * x), 1.2 + 0.3 * np.cos(2 * np.pi * x),
                   0.8 - 0.2 * np.cos(np.pi * x), np.full_like(x, 1.5)])
    run = simulate(ReactionSpec((1, 1, 1, 1), 2.0, 2.0, d, c0), pair, time, space)
    combo = mass_combination(run)
    res = np.max(np.abs(combination_residual(run, combo)), axis=1)
    assert np.all(res <= 10 * run.options.tol * (1 + np.max(np.abs(combo.u[1:]), axis=1)))
    assert run.values.min() > 0 and verify_entropy(run).passed

    rng = np.random.default_rng(11)
    spec = ReactionSpec((1, 2, 2, 1), 1.0, 3.0, d, np.ones((4, 1)))
    violations = 0
    for _ in range(10_000):
        c = rng.uniform(0, 4, 4)
        i = rng.integers(4)
        c[i] = 0.0
        violations += reaction_vector(c, spec)[i] < 0
    assert violations == 0


@criterion(9, "uniqueness gap and monotone pairing")
def test_uniqueness():
    spec = ProblemSpec(standard_pair(0.5), TimeGrid(1.0, 64), SpaceGrid(1.0, 32, "dirichlet"),
                       nonlinearity=Nonlinearity.power(2.0), u0=lambda x: np.sin(np.pi * x) + 0.5 * x * (1 - x),
                       f=1.0)
    report = uniqueness_gap(spec, ("newton-only", "picard"))
    assert report.gap <= 1e-8 and report.pairing >= -1e-12
    rng = np.random.default_rng(5)
    for _ in range(1000):
        m = rng.choice([1.0, 2.0, 3.0])
        u1, u2 = rng.normal(scale=2.0, size=(2, 8, 16))
        a = rng.uniform(0.5, 1.5, (8, 16))
        assert monotone_pairing(u1, u2, a, Nonlinearity.power(m), 0.1, 0.05) >= -1e-12


@criterion(10, "spectral fractional Laplacian")
def test_spectral():
    for beta in (0.5, 1.0, 1.5, 2.0):
        opr = SpectralOperator(2.0, 128, beta)
        x = opr.space.axis
        for j in (1, 5, 20):
            q = np.pi * j
            mode = np.cos(q * x)
            assert np.max(np.abs(opr.apply(mode) - q ** beta * mode)) <= 1e-10
    pair, time = standard_pair(0.5), TimeGrid(0.5, 20)
    opr = SpectralOperator(1.0, 64, 2.0)
    kw = dict(nonlinearity=Nonlinearity.power(2.0), u0=lambda x: 1 + 0.5 * np.cos(2 * np.pi * x))
    a = solve_nonlocal_pme(spectral_problem(opr, pair, time, **kw)).values
    b = solve(ProblemSpec(pair, time, opr.space, operator=StencilOperator(opr.space), **kw)).values
    assert np.max(np.abs(a - b)) <= 10 * opr.space.h ** 2
    result = execute(load_config(CONFIGS / "spectral.toml"), write=False)
    inner, holder = [r for r in result.reports if r.estimate.startswith("spectral")]
    assert inner.passed and holder.passed
    assert result.problem.operator.beta == 1.0 and result.problem.nonlinearity.m == 2.0


@criterion(11, "deterministic sweep summaries")
def test_determinism(tmp_path):
    src = CONFIGS / "pme_sweep.toml"
    text = src.read_text().replace("steps = 128", "steps = 16").replace("points = 32", "points = 12")
    text = text.replace('verify = ["pme", "basic", "basic-alt", "triple"]', 'verify = ["pme", "galpha"]\nseed = 3')
    cfg_path = tmp_path / "det.toml"
    cfg_path.write_text(text)
    for name, workers in (("a", 1), ("b", 1), ("c", 2)):
        assert sweep(load_config(cfg_path), tmp_path / name, workers=workers) == 0
    for name in ("b", "c"):
        assert filecmp.cmp(tmp_path / "a" / "summary.csv", tmp_path / name / "summary.csv", shallow=False)
    for name in ("a", "b", "c"):
        shutil.rmtree(tmp_path / name)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
