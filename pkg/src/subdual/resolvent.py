"""Relaxation and resolvent kernels of the scalar Volterra equations

    s + gamma (l * s) = 1,        h + gamma (h * l) = gamma l,

and the bounded regularized kernels ``k_gamma = k * h_gamma = gamma s_gamma``.

Unknowns are piecewise constant per cell (cell arrays, reported at the
right nodes), the kernel enters through its exact cell integrals, and the
triangular systems are solved by forward substitution.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .convolution import ConvOperator
from .errors import DomainError, MonotonicityError
from .grids import TimeGrid
from .kernels import Kernel, KernelPair, Tabulated, weighted_cell_weights

MONOTONICITY_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class ResolventFamily:
    gamma: float
    grid: TimeGrid
    s: np.ndarray
    r: np.ndarray
    h: np.ndarray
    k_reg: Tabulated

    @property
    def s_nodes(self) -> np.ndarray:
        """``s`` at ``t_0..t_N`` with the limit ``s(0) = 1``."""
        return np.concatenate([[1.0], self.s])


def _system(l: Kernel, gamma: float, grid: TimeGrid):
    op = ConvOperator.from_kernel(l, grid)
    return np.eye(grid.N) + gamma * op.matrix, op.weights


def solve_relaxation(l: Kernel, gamma: float, grid: TimeGrid) -> np.ndarray:
    """Cell values of ``s_gamma``; raises if the result is not
    nonincreasing (a sign of quadrature failure)."""
    if not gamma >= 0:
        raise DomainError(f"gamma must be nonnegative, got {gamma}")
    if gamma == 0:
        return np.ones(grid.N)
    A, _ = _system(l, gamma, grid)
    s = solve_triangular(A, np.ones(grid.N), lower=True)
    rise = np.diff(np.concatenate([[1.0], s]))
    if np.any(rise > MONOTONICITY_TOL):
        i = int(np.argmax(rise))
        raise MonotonicityError(
            f"relaxation function increases by {rise[i]:.3e} at t = {grid.nodes[i + 1]:.6g}"
        )
    return s


def solve_resolvent(l: Kernel, gamma: float, grid: TimeGrid) -> np.ndarray:
    """Cell values of ``h_gamma``."""
    if not gamma > 0:
        raise DomainError(f"gamma must be positive, got {gamma}")
    A, w = _system(l, gamma, grid)
    return solve_triangular(A, gamma * w / grid.dt, lower=True)


def solve_r(l: Kernel, gamma: float, grid: TimeGrid) -> np.ndarray:
    """Cell values of ``r_gamma``, the solution of ``r + gamma (l * r) = l``."""
    if not gamma >= 0:
        raise DomainError(f"gamma must be nonnegative, got {gamma}")
    A, w = _system(l, gamma, grid)
    return solve_triangular(A, w / grid.dt, lower=True)


def resolvent_family(l: Kernel, gamma: float, grid: TimeGrid) -> ResolventFamily:
    s = solve_relaxation(l, gamma, grid)
    r = solve_r(l, gamma, grid)
    h = solve_resolvent(l, gamma, grid)
    k_reg = Tabulated.on_grid(grid, gamma * np.concatenate([[1.0], s]))
    return ResolventFamily(float(gamma), grid, s, r, h, k_reg)


def regularized_kernel(pair: KernelPair, n: int, grid: TimeGrid) -> Tabulated:
    """Bounded approximation ``k_n = n s_n`` of ``k``, piecewise linear
    through the nodes (value ``n`` at the origin)."""
    if int(n) != n or n < 1:
        raise DomainError(f"regularization index must be an integer >= 1, got {n}")
    s = solve_relaxation(pair.l, float(n), grid)
    return Tabulated.on_grid(grid, n * np.concatenate([[1.0], s]))


def regularized_identity_gap(pair: KernelPair, n: int, grid: TimeGrid) -> float:
    """``max_i |k_n(t_i) - (k * h_n)(t_i)|`` over ``t_1..t_N``."""
    k_n = regularized_kernel(pair, n, grid)
    h = solve_resolvent(pair.l, float(n), grid)
    kh = singular_convolution(pair.k, h, pair.l.singularity, grid)
    return float(np.max(np.abs(k_n.value(grid.right_nodes) - kh)))


def singular_convolution(k: Kernel, f, singularity: float, grid: TimeGrid) -> np.ndarray:
    """``(k * f)(t_1..t_N)`` for a cell array ``f`` that behaves like
    ``t**(-singularity)`` near the origin.

    On each cell ``f`` is replaced by ``c_j t**(-singularity)`` with the same
    cell integral; against a power-law ``k`` the products are then
    integrated exactly, which removes the O(1) first-cell error of the
    piecewise-constant rule when both factors are singular.  Other kernels
    use the plain rule.
    """
    f = grid.check_cells(f, "f")
    if k.power_terms is None or singularity <= 0:
        return ConvOperator.from_kernel(k, grid).conv(f)
    e = 1.0 - singularity
    nodes = grid.nodes
    coef = f * grid.dt * e / (nodes[1:] ** e - nodes[:-1] ** e)
    return weighted_cell_weights(k.power_terms, e, grid) @ coef


def resolvent_convolution(pair: KernelPair, f, n: int, grid: TimeGrid) -> np.ndarray:
    """``h_n * f`` for a cell array ``f``."""
    f = grid.check_cells(f, "f")
    h = solve_resolvent(pair.l, float(n), grid)
    return ConvOperator(h * grid.dt, grid.dt, tag=f"h_{n}").conv(f)


def approx_identity_error(pair: KernelPair, f, n: int, grid: TimeGrid, p: float = 2.0) -> float:
    """Discrete ``L_p(0,T)`` norm of ``h_n * f - f``."""
    if not p >= 1:
        raise DomainError(f"p must be >= 1, got {p}")
    f = grid.check_cells(f, "f")
    if not np.all(np.isfinite(f)):
        raise DomainError("f must be finite")
    diff = np.abs(resolvent_convolution(pair, f, n, grid) - f)
    if np.isinf(p):
        return float(np.max(diff))
    return float((grid.dt * np.sum(diff ** p)) ** (1.0 / p))


def l1_distance(approx: Kernel, exact: Kernel, grid: TimeGrid, order: int = 8) -> float:
    """``int_0^T |approx - exact|`` with Gauss-Legendre per cell; the first
    cell, where ``exact`` may be singular, uses antiderivatives."""
    first = abs(float(exact.antiderivative(grid.dt)) - float(approx.antiderivative(grid.dt)))
    x, wq = np.polynomial.legendre.leggauss(order)
    lo = grid.nodes[1:-1][:, None]
    t = lo + 0.5 * grid.dt * (x[None, :] + 1.0)
    vals = np.abs(approx.value(t) - exact.value(t))
    return first + float(0.5 * grid.dt * np.sum(vals * wq[None, :]))
