"""Fractional Laplacian ``(-Laplace)^(beta/2)`` on a periodic box as the
Fourier multiplier ``|xi|^beta``, and the nonlocal porous-medium solver
built on it."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from .convolution import ConvOperator
from .errors import DomainError, GridMismatchError
from .grids import SpaceGrid, TimeGrid
from .kernels import KernelPair
from .solver import Field, ProblemSpec, solve


@dataclass(frozen=True, eq=False)
class SpectralOperator:
    L: float
    M: int
    beta: float
    dimension: int = 1

    def __post_init__(self):
        if not (0.0 < self.beta <= 2.0):
            raise DomainError(f"beta must lie in (0, 2], got {self.beta}")
        if self.M < 2 or self.dimension not in (1, 2):
            raise DomainError("need M >= 2 modes and dimension 1 or 2")

    @property
    def space(self) -> SpaceGrid:
        return SpaceGrid(self.L, self.M, "periodic", self.dimension)

    @property
    def weight(self) -> float:
        return (self.L / self.M) ** self.dimension

    @property
    def critical_exponent(self) -> float:
        """``(d - beta)_+ / d``; existence theory asks for ``m`` above it.
        Recorded in reports, not enforced."""
        return max(self.dimension - self.beta, 0.0) / self.dimension

    @cached_property
    def frequencies(self) -> np.ndarray:
        xi = 2.0 * np.pi * np.fft.fftfreq(self.M, d=self.L / self.M)
        if self.dimension == 1:
            return np.abs(xi)
        X, Y = np.meshgrid(xi, xi, indexing="ij")
        return np.sqrt(X * X + Y * Y)

    @cached_property
    def multiplier(self) -> np.ndarray:
        return self.frequencies ** self.beta

    @cached_property
    def half_multiplier(self) -> np.ndarray:
        return self.frequencies ** (0.5 * self.beta)

    def _shape(self):
        return (self.M,) * self.dimension

    def _apply_symbol(self, symbol, v):
        v = np.asarray(v, dtype=float)
        n = self.M ** self.dimension
        if v.shape[-1] != n:
            raise GridMismatchError(f"expected {n} spatial values, got {v.shape[-1]}")
        axes = tuple(range(-self.dimension, 0))
        grid = v.reshape(v.shape[:-1] + self._shape())
        out = np.fft.ifftn(symbol * np.fft.fftn(grid, axes=axes), axes=axes).real
        return out.reshape(v.shape)

    def apply(self, v):
        return self._apply_symbol(self.multiplier, v)

    def energy(self, v):
        """``A^{1/2} v`` with symbol ``|xi|^(beta/2)``."""
        return self._apply_symbol(self.half_multiplier, v)

    def solve_linearized(self, b0, diag, rhs):
        """Solve ``(b0 I + A diag(d)) x = rhs`` by GMRES, preconditioned
        with the constant-coefficient inverse."""
        n = self.M ** self.dimension
        dbar = float(np.mean(diag))
        inv_symbol = 1.0 / (b0 + dbar * self.multiplier)
        A = LinearOperator((n, n), matvec=lambda x: b0 * x + self.apply(diag * x), dtype=float)
        P = LinearOperator((n, n), matvec=lambda x: self._apply_symbol(inv_symbol, x), dtype=float)
        x, info = gmres(A, rhs, M=P, rtol=1e-13, atol=0.0, restart=min(n, 100), maxiter=50)
        if info != 0:
            dense = b0 * np.eye(n) + self.apply(np.eye(n)).T * diag[None, :]
            x = np.linalg.solve(dense, rhs)
        return x


def apply_frac_laplacian(opr: SpectralOperator, v):
    return opr.apply(v)


def spectral_problem(opr: SpectralOperator, pair: KernelPair, time: TimeGrid, **kwargs) -> ProblemSpec:
    """A :class:`ProblemSpec` on the periodic grid of ``opr`` using the
    spectral operator for the elliptic part."""
    return ProblemSpec(pair=pair, time=time, space=opr.space, operator=opr, **kwargs)


def solve_nonlocal_pme(spec: ProblemSpec, method=None) -> Field:
    if not isinstance(spec.operator, SpectralOperator):
        raise DomainError("problem does not carry a spectral operator")
    return solve(spec, method)


def half_power_seminorm(opr: SpectralOperator, w, pair: KernelPair, grid: TimeGrid,
                        companion: str = "discrete") -> float:
    """``int_0^T [k(T-t) + k(t)] ||(l dual* A^{1/2} w)(t)||^2 dt`` for cell
    rows ``w`` (shape ``(N, size)``)."""
    from .estimates import companion_operators, dual_energy_density

    w = grid.check_cells(w, "w")
    op_k, op_l = companion_operators(pair, grid, companion)
    phi = op_l.dual_conv(opr.energy(w))
    return float(np.sum(dual_energy_density(op_k) * opr.weight * np.sum(phi * phi, axis=1)))


def manufactured_periodic(opr: SpectralOperator, pair_alpha: float, time: TimeGrid):
    """Single-mode problem ``u = (1+t^2) cos(2 pi x / L)`` with ``m = 1``,
    ``a = 1``.  Returns ``(spec, exact)``."""
    from scipy import special

    from .kernels import standard_pair

    alpha = pair_alpha
    q = 2.0 * np.pi / opr.L
    c = 2.0 / special.gamma(3.0 - alpha)

    def exact(t, x):
        return (1.0 + t * t) * np.cos(q * x)

    def source(t, x):
        return c * t ** (2.0 - alpha) * np.cos(q * x) + q ** opr.beta * exact(t, x)

    spec = spectral_problem(opr, standard_pair(alpha), time, a=1.0, u0=lambda x: np.cos(q * x),
                            f=source, a_bounds=(1.0, 1.0), nonnegative=False)
    return spec, exact
