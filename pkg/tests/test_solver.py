import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from subdual.errors import DomainError, GridMismatchError, SolverError
from subdual.grids import SpaceGrid, TimeGrid
from subdual.kernels import KernelPair, Standard, standard_pair
from subdual.solver import (Field, Nonlinearity, ProblemSpec, SolverOptions, conv_weights,
                            manufactured_dirichlet, max_error, residual, solve, step_tolerances)


def test_weights_constant_kernel():
    pair = KernelPair(Standard(0.0), None)
    assert np.allclose(conv_weights(pair, TimeGrid(1.0, 10)), 1.0)


def test_weights_half_order():
    grid = TimeGrid(1.0, 50)
    b = conv_weights(standard_pair(0.5), grid)
    j = np.arange(50)
    expected = grid.dt ** -0.5 / math.gamma(1.5) * ((j + 1) ** 0.5 - j ** 0.5)
    assert np.allclose(b, expected, rtol=1e-12)
    assert b[0] == pytest.approx(grid.dt ** -0.5 / math.gamma(1.5), rel=1e-13)


@given(st.floats(0.05, 0.95), st.integers(2, 200))
def test_weights_positive_nonincreasing(alpha, N):
    b = conv_weights(standard_pair(alpha), TimeGrid(1.0, N))
    assert np.all(b > 0) and np.all(np.diff(b) <= 0)


def _spec(**kw):
    base = dict(pair=standard_pair(0.5), time=TimeGrid(1.0, 20), space=SpaceGrid(1.0, 24, "neumann"))
    base.update(kw)
    return ProblemSpec(**base)


@pytest.mark.parametrize("m", [1.0, 2.0, 3.0])
def test_constant_state_preserved(m):
    field = solve(_spec(u0=0.7, nonlinearity=Nonlinearity.power(m)))
    assert np.max(np.abs(field.values - 0.7)) <= 1e-12


def test_zero_dirichlet_state():
    field = solve(_spec(space=SpaceGrid(1.0, 24, "dirichlet"), u0=0.0, nonnegative=False))
    assert np.max(np.abs(field.values)) <= 1e-12


def test_mass_conserved():
    spec = _spec(u0=lambda x: 1 + np.cos(np.pi * x), time=TimeGrid(1.0, 40))
    field = solve(spec)
    mass = spec.space.integral(field.values)
    assert np.max(np.abs(mass - mass[0])) <= 1e-10


def test_manufactured_solution_refines():
    errs = []
    for N, M in ((16, 8), (32, 16), (64, 32)):
        spec, exact = manufactured_dirichlet(0.5, N, M)
        errs.append(max_error(solve(spec), exact))
    assert errs[0] / errs[1] >= 2.5 and errs[1] / errs[2] >= 2.5
    with pytest.raises(DomainError):
        manufactured_dirichlet(0.5, 8, 8, m=2)


def test_residual_contract():
    spec = _spec(u0=lambda x: 1 + 0.5 * np.cos(np.pi * x), nonlinearity=Nonlinearity.power(2.0),
                 f=lambda t, x: np.sin(t) * x)
    field = solve(spec)
    res = np.max(np.abs(residual(spec, field)[1:]), axis=1)
    assert np.all(res <= step_tolerances(spec, field) * 1.01)


def test_residual_of_stationary_field():
    space = SpaceGrid(1.0, 16, "dirichlet")
    u0 = space.sample(lambda x: np.sin(np.pi * x))
    spec = ProblemSpec(standard_pair(0.4), TimeGrid(1.0, 8), space, u0=u0, f=space.stiffness @ u0)
    values = np.tile(u0, (9, 1))
    assert np.max(np.abs(residual(spec, Field(values, spec.time, space)))) <= 1e-12
    values[4, 7] += 1e-3
    res = np.abs(residual(spec, Field(values, spec.time, space)))
    assert res[4, 7] > 1e-4
    with pytest.raises(GridMismatchError):
        residual(spec, np.zeros((3, 3)))


def test_positivity_preserved():
    spec = _spec(u0=lambda x: 0.01 + x ** 4, f=lambda t, x: 0 * x, nonlinearity=Nonlinearity.power(3.0))
    field = solve(spec)
    assert field.values.min() >= -1e-10


def test_sign_changing_solution():
    spec = _spec(u0=lambda x: np.cos(np.pi * x), nonnegative=False, nonlinearity=Nonlinearity.power(2.0))
    field = solve(spec)
    # odd data about x = 1/2 stays odd
    assert np.allclose(field.values, -field.values[:, ::-1], atol=1e-10)


def test_identity_table_matches_linear(tmp_path):
    path = tmp_path / "phi.csv"
    np.savetxt(path, np.array([[-5.0, -5.0], [0.0, 0.0], [5.0, 5.0]]), delimiter=",")
    table = Nonlinearity.from_csv(path)
    kw = dict(u0=lambda x: 1 + x * x)
    a = solve(_spec(nonlinearity=table, **kw)).values
    b = solve(_spec(nonlinearity=Nonlinearity("linear"), **kw)).values
    assert np.allclose(a, b, atol=1e-12)


def test_table_validation():
    with pytest.raises(DomainError):
        Nonlinearity("table", table_s=[0.0, 1.0], table_phi=[1.0, 0.5])
    with pytest.raises(DomainError):
        Nonlinearity("table", table_s=[1.0, 2.0], table_phi=[1.0, 2.0])
    with pytest.raises(DomainError):
        Nonlinearity.power(0.5)


def test_methods_agree():
    spec = _spec(u0=lambda x: 0.2 + x, nonlinearity=Nonlinearity.power(2.0))
    newton = solve(spec, "newton-only").values
    fixed = solve(spec, "picard").values
    assert np.max(np.abs(newton - fixed)) <= 1e-9


def test_two_dimensional_symmetry():
    space = SpaceGrid(1.0, 10, "neumann", dimension=2)
    spec = ProblemSpec(standard_pair(0.6), TimeGrid(0.5, 10), space,
                       nonlinearity=Nonlinearity.power(2.0), u0=lambda x, y: 1 + x * y)
    field = solve(spec)
    grid = field.values.reshape(11, 10, 10)
    assert np.allclose(grid, grid.transpose(0, 2, 1), atol=1e-11)
    mass = space.integral(field.values)
    assert np.allclose(mass, mass[0], atol=1e-10)


def test_iteration_budget_exhausted():
    spec = _spec(u0=lambda x: 0.1 + x, nonlinearity=Nonlinearity.power(3.0),
                 options=SolverOptions(max_newton=1, max_fixed_point=1, method="newton"))
    with pytest.raises(SolverError) as err:
        solve(spec)
    assert err.value.diagnostics["step"] == 1
    assert "residual_history" in err.value.diagnostics


def test_coefficient_bounds():
    with pytest.raises(DomainError, match="lower bound must be positive"):
        _spec(a_bounds=(0.0, 2.0))
    with pytest.raises(DomainError, match="violates"):
        _spec(a=3.0, a_bounds=(1.0, 2.0))
    with pytest.raises(DomainError):
        _spec(a=-1.0)
    with pytest.raises(DomainError):
        _spec(u0=-1.0)
