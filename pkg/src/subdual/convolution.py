"""Discrete causal convolution on a uniform grid, its exact transpose (the
dual convolution), and numerical checks of the duality identities.

A ``ConvOperator`` acts on cell arrays (see :mod:`subdual.grids`).
``conv`` returns values at the right nodes ``t_1..t_N``; ``dual_conv``
returns values at the left nodes ``t_0..t_{N-1}``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import solve_triangular, toeplitz

from .errors import GridMismatchError, PreconditionError
from .grids import TimeGrid
from .kernels import Kernel, convolve_kernels


@dataclass(frozen=True, eq=False)
class ConvOperator:
    """Lower-triangular Toeplitz operator ``(C f)_i = sum_{j<=i} w_{i-j} f_j``.

    ``w_m`` is the exact integral of the kernel over ``(t_m, t_{m+1})``.
    """

    weights: np.ndarray
    dt: float
    tag: str = ""

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.ndim != 1 or w.size < 1:
            raise GridMismatchError("weights must be a nonempty 1-D array")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_kernel(cls, k: Kernel, grid: TimeGrid) -> "ConvOperator":
        return cls(k.cell_integrals(grid), grid.dt, tag=repr(k))

    @property
    def N(self) -> int:
        return self.weights.size

    @cached_property
    def matrix(self) -> np.ndarray:
        first_row = np.zeros(self.N)
        first_row[0] = self.weights[0]
        return toeplitz(self.weights, first_row)

    def _check(self, f):
        f = np.asarray(f, dtype=float)
        if f.shape[:1] != (self.N,):
            raise GridMismatchError(f"expected {self.N} cell values, got shape {f.shape}")
        return f

    def conv(self, f) -> np.ndarray:
        f = self._check(f)
        return (self.matrix @ f.reshape(self.N, -1)).reshape(f.shape)

    def dual_conv(self, g) -> np.ndarray:
        g = self._check(g)
        return (self.matrix.T @ g.reshape(self.N, -1)).reshape(g.shape)

    def solve(self, rhs) -> np.ndarray:
        """Invert ``conv`` by forward substitution."""
        rhs = self._check(rhs)
        out = solve_triangular(self.matrix, rhs.reshape(self.N, -1), lower=True)
        return out.reshape(rhs.shape)

    def scaled(self, c: float) -> "ConvOperator":
        return ConvOperator(c * self.weights, self.dt, self.tag)

    def companion(self) -> "ConvOperator":
        """The operator ``C_l`` with ``C_l C_k = dt * (lower ones)``, i.e. the
        discrete convolution inverse of this kernel against the constant 1.

        For nonnegative, nonincreasing, log-convex weights the result is
        nonnegative and nonincreasing as well.
        """
        w = self.weights
        if not w[0] > 0:
            from .errors import SingularSystemError

            raise SingularSystemError("leading convolution weight vanishes")
        out = np.empty_like(w)
        for n in range(self.N):
            acc = self.dt - np.dot(w[1 : n + 1], out[n - 1 :: -1]) if n else self.dt
            out[n] = acc / w[0]
        return ConvOperator(out, self.dt, tag=f"companion({self.tag})")


def conv(op: ConvOperator, f) -> np.ndarray:
    return op.conv(f)


def dual_conv(op: ConvOperator, g) -> np.ndarray:
    return op.dual_conv(g)


def pairing(a, b, dt: float) -> float:
    """Time pairing ``sum_i a_i b_i dt`` of two cell arrays."""
    return float(np.sum(np.asarray(a) * np.asarray(b)) * dt)


def _cells(values, grid: TimeGrid, name: str) -> np.ndarray:
    if callable(values):
        return np.asarray(values(grid.midpoints), dtype=float) * np.ones(grid.N)
    return grid.check_cells(values, name)


def _nodes(values, grid: TimeGrid, name: str) -> np.ndarray:
    if callable(values):
        return np.asarray(values(grid.nodes), dtype=float) * np.ones(grid.N + 1)
    return grid.check_nodes(values, name)


def time_derivative(values, dt: float) -> np.ndarray:
    """Centred differences inside, second-order one-sided at the ends."""
    return np.gradient(np.asarray(values, dtype=float), dt, edge_order=2)


def _require_bounded(k: Kernel):
    if not k.bounded:
        raise PreconditionError(
            "kernel is unbounded at the origin; regularize it first (see regularized_kernel)"
        )


def check_successive_dual(b: Kernel, h: Kernel, g, grid: TimeGrid) -> float:
    """Max nodal gap between ``b dual* (h dual* g)`` and ``(b*h) dual* g``.

    ``g`` is a cell array or a callable sampled at cell midpoints.
    """
    g = _cells(g, grid, "g")
    left = ConvOperator.from_kernel(b, grid).dual_conv(ConvOperator.from_kernel(h, grid).dual_conv(g))
    right = ConvOperator.from_kernel(convolve_kernels(b, h), grid).dual_conv(g)
    return float(np.max(np.abs(left - right)))


def _node_conv(op: ConvOperator, v_nodes: np.ndarray) -> np.ndarray:
    """``(k*v)`` at all nodes from node samples (cell-average input)."""
    avg = 0.5 * (v_nodes[1:] + v_nodes[:-1])
    return np.concatenate([[0.0], op.conv(avg)])


def _node_dual_conv(op: ConvOperator, v_nodes: np.ndarray) -> np.ndarray:
    avg = 0.5 * (v_nodes[1:] + v_nodes[:-1])
    return np.concatenate([op.dual_conv(avg), [0.0]])


def check_integrodiff_duality(k: Kernel, f, g, grid: TimeGrid) -> float:
    """``| int (d/dt)(k dual* f) g + int f (d/dt)(k * g) |`` by trapezoidal
    quadrature of node samples.

    ``f`` and ``g`` are node arrays or callables.  ``k`` must be bounded at
    the origin.
    """
    _require_bounded(k)
    f = _nodes(f, grid, "f")
    g = _nodes(g, grid, "g")
    op = ConvOperator.from_kernel(k, grid)
    left = np.trapezoid(time_derivative(_node_dual_conv(op, f), grid.dt) * g, dx=grid.dt)
    right = -np.trapezoid(f * time_derivative(_node_conv(op, g), grid.dt), dx=grid.dt)
    return float(abs(left - right))


def fundamental_identity_sides(k: Kernel, v, grid: TimeGrid):
    """Node arrays of both sides of the pointwise energy identity
    ``v (k*v)' = (k*v^2)'/2 + k v^2/2 + (1/2) int_0^t (-k'(s)) |v(t)-v(t-s)|^2 ds``.
    """
    _require_bounded(k)
    v = _nodes(v, grid, "v")
    op = ConvOperator.from_kernel(k, grid)
    dt = grid.dt
    left = v * time_derivative(_node_conv(op, v), dt)
    k_nodes = np.concatenate([[k.limit_at_zero()], k.value(grid.right_nodes)])
    slope = np.concatenate([[0.0], -k.derivative(grid.right_nodes)])
    history = np.zeros(grid.N + 1)
    for i in range(1, grid.N + 1):
        # lag s = t_j, j = 0..i; the j = 0 integrand vanishes identically
        jumps = (v[i] - v[i::-1]) ** 2
        history[i] = np.trapezoid(slope[: i + 1] * jumps, dx=dt)
    right = 0.5 * time_derivative(_node_conv(op, v * v), dt) + 0.5 * k_nodes * v * v + 0.5 * history
    return left, right


def check_fundamental_identity(k: Kernel, v, grid: TimeGrid) -> float:
    left, right = fundamental_identity_sides(k, v, grid)
    return float(np.max(np.abs(left - right)))


def duality_defect(op: ConvOperator, f, g) -> float:
    """``|<C f, g> - <f, C^T g>|`` for cell arrays."""
    return abs(pairing(op.conv(f), g, op.dt) - pairing(f, op.dual_conv(g), op.dt))
