import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, special

from subdual.errors import DomainError, SingularSystemError
from subdual.grids import TimeGrid
from subdual.kernels import (ExpShifted, MultiTerm, PowerSum, Standard, Tabulated, antiderivative,
                             companion_kernel, convolve_kernels, eval_standard, is_nonincreasing,
                             pair_from_kernel, pairing_residual, standard_pair)

alphas = st.floats(0.02, 0.98)


def test_eval_standard_values():
    assert eval_standard(1.0, 7.3) == pytest.approx(1.0, abs=1e-15)
    assert eval_standard(2.0, 3.0) == pytest.approx(3.0, rel=1e-14)
    assert eval_standard(0.5, 1.0) == pytest.approx(0.5641896, abs=1e-6)
    assert eval_standard(0.5, 1.0) == pytest.approx(1 / math.sqrt(math.pi), rel=1e-14)


@pytest.mark.parametrize("beta,t", [(0.5, 0.0), (0.5, -1.0), (0.0, 1.0), (-0.3, 1.0)])
def test_eval_standard_domain(beta, t):
    with pytest.raises(DomainError):
        eval_standard(beta, t)


def test_antiderivative_examples():
    # integral of g_{0.5} is g_{1.5}; g_{1.5}(1) = 1/Gamma(1.5) = 2/sqrt(pi)
    assert antiderivative(Standard(0.5), 1.0) == pytest.approx(1 / math.gamma(1.5), rel=1e-14)
    assert antiderivative(Standard(0.5), 0.0) == 0.0
    k = MultiTerm(((1.0, 0.3), (2.0, 0.7)))
    expected = 1 / math.gamma(1.7) + 2 / math.gamma(1.3)
    assert antiderivative(k, 1.0) == pytest.approx(expected, rel=1e-14)
    with pytest.raises(DomainError):
        antiderivative(Standard(0.5), -0.1)


def test_standard_pair():
    pair = standard_pair(0.3)
    assert pair.k == Standard(0.3) and pair.k.order == pytest.approx(0.7)
    assert pair.l.order == pytest.approx(0.3)
    near = standard_pair(0.999)
    assert near.k.order == pytest.approx(0.001) and near.l.order == pytest.approx(0.999)
    for bad in (0.0, 1.0, -0.2, 1.5):
        with pytest.raises(DomainError):
            standard_pair(bad)


def test_standard_range():
    with pytest.raises(DomainError):
        Standard(1.0)
    assert Standard(0.0).value(2.0) == 1.0  # constant kernel


def test_companion_recovers_standard():
    grid = TimeGrid(1.0, 512)
    l = companion_kernel(Standard(0.5), grid)
    exact = eval_standard(0.5, grid.right_nodes)
    assert np.max(np.abs(l.node_values - exact)) <= 5e-3


@given(st.floats(0.1, 10.0))
def test_companion_scales_inversely(c):
    grid = TimeGrid(1.0, 64)
    base = companion_kernel(Standard(0.4), grid)
    scaled = companion_kernel(Standard(0.4).scaled(c), grid)
    assert np.allclose(scaled.coefficients * c, base.coefficients, rtol=1e-12)


def test_companion_multiterm_pairing():
    k = MultiTerm(((1.0, 0.3), (1.0, 0.7)))  # g_{0.7} + g_{0.3}
    l = companion_kernel(k, TimeGrid(1.0, 256))
    assert pairing_residual(k, l) <= 1e-8
    pair = pair_from_kernel(k, TimeGrid(1.0, 256))
    assert pair.l.nonincreasing


def test_companion_of_tempered_kernel():
    k = ExpShifted(0.4, 2.0)
    grid = TimeGrid(2.0, 200)
    l = companion_kernel(k, grid)
    assert pairing_residual(k, l) <= 1e-8
    # k * l = 1 also holds for the continuous convolution, up to quadrature
    w = k.cell_integrals(grid)
    conv = np.convolve(w, l.coefficients)[: grid.N]
    assert np.allclose(conv, 1.0, atol=1e-12)


def test_companion_errors():
    grid = TimeGrid(1.0, 16)
    with pytest.warns(RuntimeWarning):
        companion_kernel(ExpShifted(0.0, 1.0), grid)
    zero = Tabulated(np.array([0.0, 1.0]), np.array([0.0, 0.0]))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with pytest.raises(SingularSystemError):
            companion_kernel(zero, grid)
    with pytest.raises(DomainError):
        companion_kernel(Standard(0.5), TimeGrid(1.0, 1))


def _variants(draw_alpha, mu):
    return [Standard(draw_alpha), MultiTerm(((0.5, draw_alpha), (2.0, 0.5 * draw_alpha + 0.1))),
            ExpShifted(draw_alpha, mu)]


@given(alphas, st.floats(0.0, 5.0))
def test_monotone_and_nonnegative(alpha, mu):
    t = np.sort(np.concatenate([np.geomspace(1e-8, 1.0, 200), np.linspace(0.01, 3.0, 100)]))
    for k in _variants(alpha, mu):
        v = k.value(t)
        assert np.all(np.isfinite(v)) and np.all(v >= 0)
        assert is_nonincreasing(k, t)


@given(st.floats(0.02, 0.95))
def test_small_time_behaviour(alpha):
    for k in (Standard(alpha), MultiTerm(((1.0, alpha), (0.5, 0.5 * alpha)))):
        t = 2.0 ** -np.arange(1, 1001)
        tk = t * k.value(t)
        assert np.all(np.diff(tk) < 0)
        assert tk[-1] < 1e-6


@given(st.floats(0.02, 0.9))
def test_weighted_derivative_integrable(alpha):
    # int_0^T s |k'(s)| ds for g_{1-alpha} equals alpha T^{1-alpha} / Gamma(2-alpha)
    k, T = Standard(alpha), 1.0
    edges = 2.0 ** -np.arange(500, -1, -1)
    x, w = np.polynomial.legendre.leggauss(20)
    a, b = edges[:-1, None], edges[1:, None]
    s = 0.5 * (a + b) + 0.5 * (b - a) * x
    total = np.sum(0.5 * (b - a) * w * s * np.abs(k.derivative(s)))
    exact = alpha * T ** (1 - alpha) / special.gamma(2 - alpha)
    assert total == pytest.approx(exact, rel=1e-6)


@given(alphas, st.floats(0.0, 5.0), st.floats(1e-4, 5.0))
def test_convexity_bound(alpha, mu, t):
    for k in _variants(alpha, mu):
        assert k.completely_monotone
        assert -k.derivative(t) >= (k.value(t) - k.value(2 * t)) / t * (1 - 1e-12)


@given(alphas, st.floats(0.0, 5.0), st.floats(1e-3, 3.0))
def test_antiderivative_matches_value(alpha, mu, t):
    for k in _variants(alpha, mu):
        ref, _ = integrate.quad(lambda s: float(k.value(s)), 0.5 * t, t, epsabs=0, epsrel=1e-12)
        assert k.antiderivative(t) - k.antiderivative(0.5 * t) == pytest.approx(ref, rel=1e-9, abs=1e-300)


@given(alphas, st.integers(2, 300))
def test_cell_integrals_positive_nonincreasing(alpha, N):
    grid = TimeGrid(1.0, N)
    for k in _variants(alpha, 1.0):
        w = k.cell_integrals(grid)
        assert np.all(w > 0) and np.all(np.diff(w) <= 1e-15)
        assert np.sum(w) == pytest.approx(k.antiderivative(1.0), rel=1e-12)


def test_power_sum_convolution():
    k = convolve_kernels(Standard(0.3), Standard(0.7))  # g_{0.7} * g_{0.3} = g_1
    assert isinstance(k, PowerSum)
    assert k.value(np.array([0.3, 2.0])) == pytest.approx([1.0, 1.0])
    with pytest.raises(DomainError):
        convolve_kernels(ExpShifted(0.3, 1.0), Standard(0.5))


def test_tabulated_csv(tmp_path):
    t = np.array([0.01, 0.02, 0.1, 0.5, 1.0])
    k = eval_standard(0.5, t)
    path = tmp_path / "kernel.csv"
    np.savetxt(path, np.column_stack([t, k]), delimiter=",")
    tab = Tabulated.from_csv(path)
    assert tab.value(t) == pytest.approx(k)
    # the power-law head reproduces g_{0.5} exactly below the first sample
    assert tab.value(0.0025) == pytest.approx(eval_standard(0.5, 0.0025), rel=1e-10)
    assert tab.antiderivative(0.01) == pytest.approx(antiderivative(Standard(0.5), 0.01), rel=1e-10)
    assert not tab.bounded and tab.singularity == pytest.approx(0.5)
    assert is_nonincreasing(tab, np.linspace(0.001, 2.0, 500))
    with pytest.raises(FileNotFoundError, match="file not found"):
        Tabulated.from_csv(tmp_path / "missing.csv")


def test_tabulated_validation():
    with pytest.raises(DomainError):
        Tabulated(np.array([0.0, 1.0]), np.array([1.0, 2.0]))
    with pytest.raises(DomainError):
        Tabulated(np.array([0.0, 1.0]), np.array([-1.0, -2.0]))
    lin = Tabulated(np.array([0.0, 1.0, 2.0]), np.array([2.0, 1.0, 0.5]))
    assert lin.antiderivative(2.0) == pytest.approx(1.5 + 0.75)
    assert lin.derivative(0.5) == pytest.approx(-1.0)
    assert lin.bounded and lin.limit_at_zero() == 2.0
