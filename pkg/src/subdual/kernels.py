"""Memory kernels: the power-law family, multi-term and exponentially
shifted variants, tabulated kernels, and numerically computed companions.

All kernels are immutable.  Values are only ever requested at ``t > 0``;
quadrature goes through :meth:`Kernel.antiderivative` so the integrable
singularity at the origin never has to be sampled.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import special
from scipy.linalg import solve_triangular

from .errors import DomainError, PreconditionError, SingularSystemError
from .grids import TimeGrid

DEFAULT_PAIR_TOLERANCE = 1e-8


def _as_times(t, allow_zero=False) -> np.ndarray:
    arr = np.asarray(t, dtype=float)
    bad = (arr < 0) if allow_zero else (arr <= 0)
    if np.any(bad) or np.any(np.isnan(arr)):
        bound = "nonnegative" if allow_zero else "positive"
        raise DomainError(f"times must be {bound}")
    return arr


def _ret(arr):
    return float(arr) if np.ndim(arr) == 0 else arr


def eval_standard(beta: float, t):
    """The power kernel ``t**(beta-1) / Gamma(beta)`` for ``t > 0``."""
    if not beta > 0:
        raise DomainError(f"order must be positive, got {beta}")
    t = _as_times(t)
    return _ret(np.exp((beta - 1.0) * np.log(t) - special.gammaln(beta)))


def _power_increment(beta: float, m: np.ndarray) -> np.ndarray:
    """``(m+1)**beta - m**beta`` without cancellation for large ``m``."""
    m = np.asarray(m, dtype=float)
    out = np.ones_like(m)
    pos = m > 0
    mp = m[pos]
    out[pos] = np.exp(beta * np.log(mp)) * np.expm1(beta * np.log1p(1.0 / mp))
    return out


class Kernel:
    """Base class.  Subclasses implement ``_value``, ``_antiderivative``
    and ``_derivative`` on validated arrays."""

    completely_monotone: bool = False

    def __call__(self, t):
        return self.value(t)

    def value(self, t):
        return _ret(self._value(_as_times(t)))

    def antiderivative(self, t):
        return _ret(self._antiderivative(_as_times(t, allow_zero=True)))

    def derivative(self, t):
        return _ret(self._derivative(_as_times(t)))

    def cell_integrals(self, grid: TimeGrid) -> np.ndarray:
        K = self._antiderivative(grid.nodes)
        return np.diff(K)

    @property
    def power_terms(self):
        """``((coef, order), ...)`` if the kernel is a finite sum of power
        kernels ``coef * g_order``, else ``None``."""
        return None

    @property
    def singularity(self) -> float:
        """Exponent ``s`` with ``k(t) ~ t**(-s)`` as ``t -> 0`` (0 if bounded)."""
        return 0.0

    @property
    def bounded(self) -> bool:
        return np.isfinite(self.limit_at_zero())

    def limit_at_zero(self) -> float:
        raise NotImplementedError

    @property
    def nonincreasing(self) -> bool:
        return True

    def scaled(self, c: float) -> "Kernel":
        return Scaled(self, float(c))


# -- power-law family ---------------------------------------------------------

class _PowerSumMixin(Kernel):
    @property
    def power_terms(self):
        raise NotImplementedError

    def _value(self, t):
        out = np.zeros_like(t)
        for c, beta in self.power_terms:
            out = out + c * np.exp((beta - 1.0) * np.log(t) - special.gammaln(beta))
        return out

    def _antiderivative(self, t):
        out = np.zeros_like(t)
        for c, beta in self.power_terms:
            out = out + c * np.power(t, beta) / special.gamma(beta + 1.0)
        return out

    def _derivative(self, t):
        out = np.zeros_like(t)
        for c, beta in self.power_terms:
            if beta != 1.0:
                out = out + c * (beta - 1.0) * np.exp((beta - 2.0) * np.log(t) - special.gammaln(beta))
        return out

    def cell_integrals(self, grid: TimeGrid) -> np.ndarray:
        m = np.arange(grid.N)
        out = np.zeros(grid.N)
        for c, beta in self.power_terms:
            out += c * grid.dt ** beta / special.gamma(beta + 1.0) * _power_increment(beta, m)
        return out

    @property
    def singularity(self) -> float:
        return max(0.0, 1.0 - min(beta for _, beta in self.power_terms))

    def limit_at_zero(self) -> float:
        lowest = min(beta for _, beta in self.power_terms)
        if lowest < 1.0:
            return math.inf
        return float(sum(c for c, beta in self.power_terms if beta == 1.0))

    @property
    def nonincreasing(self) -> bool:
        return all(c >= 0 and beta <= 1.0 for c, beta in self.power_terms)

    @property
    def completely_monotone(self) -> bool:
        return self.nonincreasing


@dataclass(frozen=True)
class Standard(_PowerSumMixin):
    """``g_{1-alpha}``, the kernel of the Caputo derivative of order alpha.

    ``alpha = 0`` gives the constant kernel 1 (used for classical-limit
    cross-checks).
    """

    alpha: float

    def __post_init__(self):
        if not (0.0 <= self.alpha < 1.0):
            raise DomainError(f"alpha must lie in [0, 1), got {self.alpha}")
        object.__setattr__(self, "alpha", float(self.alpha))

    @property
    def order(self) -> float:
        return 1.0 - self.alpha

    @property
    def power_terms(self):
        return ((1.0, self.order),)


@dataclass(frozen=True)
class MultiTerm(_PowerSumMixin):
    """``sum_j weight_j * g_{1-alpha_j}``; also the quadrature representation
    of a distributed-order kernel."""

    terms: tuple

    def __post_init__(self):
        terms = tuple((float(w), float(a)) for w, a in self.terms)
        if not terms:
            raise DomainError("multi-term kernel needs at least one term")
        for w, a in terms:
            if not w > 0:
                raise DomainError(f"multi-term weights must be positive, got {w}")
            if not (0.0 < a < 1.0):
                raise DomainError(f"multi-term orders must lie in (0, 1), got {a}")
        object.__setattr__(self, "terms", terms)

    @property
    def power_terms(self):
        return tuple((w, 1.0 - a) for w, a in self.terms)


@dataclass(frozen=True)
class PowerSum(_PowerSumMixin):
    """General ``sum_j coef_j * g_{order_j}``; closed under convolution."""

    terms: tuple

    def __post_init__(self):
        merged: dict = {}
        for c, beta in self.terms:
            if not beta > 0:
                raise DomainError(f"orders must be positive, got {beta}")
            merged[float(beta)] = merged.get(float(beta), 0.0) + float(c)
        object.__setattr__(self, "terms", tuple((c, b) for b, c in sorted(merged.items())))
        if not self.terms:
            raise DomainError("power sum needs at least one term")

    @property
    def power_terms(self):
        return self.terms


@dataclass(frozen=True)
class ExpShifted(Kernel):
    """``exp(-mu t) * g_{1-alpha}(t)``, a tempered power kernel."""

    alpha: float
    mu: float

    def __post_init__(self):
        if not (0.0 <= self.alpha < 1.0):
            raise DomainError(f"alpha must lie in [0, 1), got {self.alpha}")
        if not self.mu >= 0:
            raise DomainError(f"shift must be nonnegative, got {self.mu}")
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "mu", float(self.mu))

    completely_monotone = True

    @property
    def power_terms(self):
        return ((1.0, 1.0 - self.alpha),) if self.mu == 0 else None

    def _value(self, t):
        return np.exp(-self.mu * t - self.alpha * np.log(t) - special.gammaln(1.0 - self.alpha))

    def _antiderivative(self, t):
        a = 1.0 - self.alpha
        if self.mu == 0:
            return np.power(t, a) / special.gamma(a + 1.0)
        x = self.mu * np.asarray(t, dtype=float)
        # for small mu t the closed form underflows; sum the power series instead
        k = np.arange(10)
        terms = (-x[..., None]) ** k / (special.factorial(k) * (a + k))
        series = np.power(t, a) / special.gamma(a) * terms.sum(axis=-1)
        with np.errstate(over="ignore", invalid="ignore"):
            closed = np.float64(self.mu) ** (-a) * special.gammainc(a, x)
        return np.where(x < 1e-2, series, closed)

    def _derivative(self, t):
        return -(self.mu + self.alpha / t) * self._value(t)

    @property
    def singularity(self) -> float:
        return self.alpha

    def limit_at_zero(self) -> float:
        return 1.0 if self.alpha == 0 else math.inf


@dataclass(frozen=True)
class Scaled(Kernel):
    base: Kernel
    factor: float

    def __post_init__(self):
        if not self.factor > 0:
            raise DomainError(f"scale factor must be positive, got {self.factor}")

    @property
    def completely_monotone(self):
        return self.base.completely_monotone

    @property
    def power_terms(self):
        terms = self.base.power_terms
        return None if terms is None else tuple((self.factor * c, b) for c, b in terms)

    def _value(self, t):
        return self.factor * self.base._value(t)

    def _antiderivative(self, t):
        return self.factor * self.base._antiderivative(t)

    def _derivative(self, t):
        return self.factor * self.base._derivative(t)

    def cell_integrals(self, grid):
        return self.factor * self.base.cell_integrals(grid)

    @property
    def singularity(self):
        return self.base.singularity

    def limit_at_zero(self):
        return self.factor * self.base.limit_at_zero()

    @property
    def nonincreasing(self):
        return self.base.nonincreasing

    def scaled(self, c):
        return Scaled(self.base, self.factor * float(c))


# -- tabulated kernels --------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Tabulated(Kernel):
    """Piecewise-linear kernel through samples ``(times[i], values[i])``.

    If ``times[0] > 0`` the segment ``(0, times[0]]`` is a power law
    ``values[0] * (t/times[0])**(-s)`` whose exponent ``s`` in [0, 1) is
    read off the first two samples, so singular kernels tabulated away from
    the origin keep an integrable singularity.  Beyond the last sample the
    kernel is continued as a constant.
    """

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or t.shape != v.shape or t.size < 2:
            raise DomainError("tabulated kernel needs matching 1-D arrays with at least 2 samples")
        if t[0] < 0 or np.any(np.diff(t) <= 0):
            raise DomainError("tabulation times must be nonnegative and strictly increasing")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise DomainError("tabulated kernel values must be finite and nonnegative")
        if np.any(np.diff(v) > 1e-12 * max(1.0, float(np.max(v)))):
            raise DomainError("tabulated kernel must be nonincreasing")
        t.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @classmethod
    def on_grid(cls, grid: TimeGrid, node_values) -> "Tabulated":
        return cls(grid.nodes.copy(), grid.check_nodes(node_values, "kernel samples"))

    @classmethod
    def from_csv(cls, path) -> "Tabulated":
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"file not found: {path}")
        data = np.loadtxt(path, delimiter=",", ndmin=2, comments="#")
        if data.shape[1] != 2:
            raise DomainError(f"{path}: expected two columns t, k(t)")
        return cls(data[:, 0], data[:, 1])

    @cached_property
    def _head_exponent(self) -> float:
        t, v = self.times, self.values
        if t[0] == 0.0 or v[0] == 0.0 or v[1] <= 0.0:
            return 0.0
        s = -math.log(v[1] / v[0]) / math.log(t[1] / t[0])
        return float(min(max(s, 0.0), 0.999))

    @cached_property
    def _cumulative(self) -> np.ndarray:
        t, v = self.times, self.values
        head = 0.0 if t[0] == 0.0 else v[0] * t[0] / (1.0 - self._head_exponent)
        return head + np.concatenate([[0.0], np.cumsum(0.5 * (v[1:] + v[:-1]) * np.diff(t))])

    def _locate(self, t):
        j = np.searchsorted(self.times, t, side="left") - 1
        return np.clip(j, 0, self.times.size - 2)

    def _value(self, t):
        tt, v = self.times, self.values
        out = np.interp(t, tt, v)
        head = t < tt[0]
        if np.any(head):
            out = np.where(head, v[0] * np.power(np.where(head, t, tt[0]) / tt[0], -self._head_exponent), out)
        return out

    def _antiderivative(self, t):
        tt, v, K = self.times, self.values, self._cumulative
        j = self._locate(t)
        lo = tt[j]
        slope = (v[j + 1] - v[j]) / (tt[j + 1] - tt[j])
        tc = np.minimum(t, tt[-1])
        d = tc - lo
        inside = K[j] + v[j] * d + 0.5 * slope * d * d
        out = np.where(t > tt[-1], K[-1] + v[-1] * (t - tt[-1]), inside)
        head = t < tt[0]
        if np.any(head):
            s = self._head_exponent
            th = np.where(head, t, tt[0])
            out = np.where(head, v[0] * tt[0] / (1.0 - s) * np.power(th / tt[0], 1.0 - s), out)
        return out

    def _derivative(self, t):
        tt, v = self.times, self.values
        j = self._locate(t)
        slope = (v[j + 1] - v[j]) / (tt[j + 1] - tt[j])
        out = np.where(t > tt[-1], 0.0, slope)
        head = t < tt[0]
        if np.any(head):
            s = self._head_exponent
            th = np.where(head, t, tt[0])
            out = np.where(head, -s * v[0] / tt[0] * np.power(th / tt[0], -s - 1.0), out)
        return out

    @property
    def singularity(self):
        return self._head_exponent

    def limit_at_zero(self):
        if self.times[0] == 0.0 or self._head_exponent == 0.0:
            return float(self.values[0])
        return math.inf


@dataclass(frozen=True, eq=False)
class CellKernel(Kernel):
    """Kernel tabulated per grid cell as ``coef_j * t**(exponent-1)`` on
    ``(t_j, t_{j+1}]``; ``exponent = 1`` is piecewise constant.  Cell
    integrals on the defining grid are exact."""

    grid: TimeGrid
    coefficients: np.ndarray
    exponent: float = 1.0

    def __post_init__(self):
        c = self.grid.check_cells(self.coefficients, "cell coefficients").copy()
        if c.ndim != 1:
            raise DomainError("cell coefficients must be one-dimensional")
        if not (0.0 < self.exponent <= 1.0):
            raise DomainError(f"cell exponent must lie in (0, 1], got {self.exponent}")
        c.setflags(write=False)
        object.__setattr__(self, "coefficients", c)

    def _cell(self, t):
        j = np.ceil(t / self.grid.dt - 1e-12).astype(int) - 1
        return np.clip(j, 0, self.grid.N - 1)

    @cached_property
    def _cumulative(self):
        p = self.exponent
        nodes = self.grid.nodes
        inc = self.coefficients * (nodes[1:] ** p - nodes[:-1] ** p) / p
        return np.concatenate([[0.0], np.cumsum(inc)])

    @property
    def node_values(self) -> np.ndarray:
        """Values at ``t_1, ..., t_N`` (right end of each cell)."""
        return self.coefficients * self.grid.right_nodes ** (self.exponent - 1.0)

    def _value(self, t):
        return self.coefficients[self._cell(t)] * np.power(t, self.exponent - 1.0)

    def _antiderivative(self, t):
        p = self.exponent
        j = self._cell(np.maximum(t, 1e-300))
        lo = self.grid.nodes[j]
        return self._cumulative[j] + self.coefficients[j] * (np.power(t, p) - lo ** p) / p

    def _derivative(self, t):
        return self.coefficients[self._cell(t)] * (self.exponent - 1.0) * np.power(t, self.exponent - 2.0)

    def cell_integrals(self, grid):
        if grid == self.grid:
            return np.diff(self._cumulative)
        return super().cell_integrals(grid)

    @property
    def singularity(self):
        return 1.0 - self.exponent

    def limit_at_zero(self):
        return float(self.coefficients[0]) if self.exponent == 1.0 else math.inf

    @property
    def nonincreasing(self):
        return bool(np.all(np.diff(self.node_values) <= 1e-12 * np.max(np.abs(self.node_values))))


# -- pairs and companions -----------------------------------------------------

@dataclass(frozen=True)
class KernelPair:
    """A memory kernel ``k`` with companion ``l`` such that ``k * l = 1``.

    ``l`` may be ``None`` for bounded ``k`` whose companion contains a point
    mass; everything downstream then works with the discrete companion of
    ``k`` only.
    """

    k: Kernel
    l: Optional[Kernel]
    pair_tol: float = DEFAULT_PAIR_TOLERANCE


def antiderivative(k: Kernel, t):
    """``int_0^t k(s) ds``."""
    return k.antiderivative(t)


def standard_pair(alpha: float) -> KernelPair:
    """``(g_{1-alpha}, g_alpha)``; their convolution is identically 1."""
    if not (0.0 < alpha < 1.0):
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    return KernelPair(Standard(alpha), Standard(1.0 - alpha), pair_tol=0.0)


def convolve_kernels(a: Kernel, b: Kernel) -> Kernel:
    """Closed-form convolution of two power sums (``g_p * g_q = g_{p+q}``)."""
    ta, tb = a.power_terms, b.power_terms
    if ta is None or tb is None:
        raise DomainError("closed-form convolution is only available for power-law kernels")
    return PowerSum(tuple((ca * cb, pa + pb) for ca, pa in ta for cb, pb in tb))


def weighted_cell_weights(terms, exponent: float, grid: TimeGrid) -> np.ndarray:
    """Lower-triangular ``W[n, j] = int_{t_j}^{t_{j+1}} tau**(exponent-1)
    k(t_{n+1} - tau) d tau`` for a power-sum ``k``."""
    N = grid.N
    nodes = grid.nodes
    t_eval = nodes[1:][:, None]
    lo = nodes[:-1][None, :] / t_eval
    hi = np.minimum(nodes[1:][None, :] / t_eval, 1.0)
    mask = np.tril(np.ones((N, N), dtype=bool))
    W = np.zeros((N, N))
    p = exponent
    for c, beta in terms:
        scale = c * t_eval ** (p + beta - 1.0) * special.beta(p, beta) / special.gamma(beta)
        near_one = lo > 0.5
        direct = special.betainc(p, beta, hi) - special.betainc(p, beta, lo)
        flipped = special.betainc(beta, p, 1.0 - lo) - special.betainc(beta, p, 1.0 - hi)
        W += scale * np.where(near_one, flipped, direct)
    return np.where(mask, W, 0.0)


def companion_system(k: Kernel, grid: TimeGrid):
    """Return ``(matrix, exponent)`` of the product-integration system
    ``matrix @ coef = 1`` whose solution gives the companion cell
    coefficients.  Power sums use a cell ansatz weighted by
    ``t**(exponent-1)`` matching the companion's singularity; other kernels
    fall back to piecewise-constant cells."""
    terms = k.power_terms
    if terms is not None and k.singularity > 0:
        exponent = k.singularity
        return weighted_cell_weights(terms, exponent, grid), exponent
    w = k.cell_integrals(grid)
    N = grid.N
    idx = np.arange(N)
    lag = idx[:, None] - idx[None, :]
    W = np.where(lag >= 0, w[np.clip(lag, 0, N - 1)], 0.0)
    return W, 1.0


def companion_kernel(k: Kernel, grid: TimeGrid) -> CellKernel:
    """Numerical companion ``l`` with ``k * l = 1`` at every grid node,
    by forward substitution on the lower-triangular system."""
    if grid.N < 2:
        raise DomainError("companion construction needs at least 2 steps")
    if k.bounded:
        warnings.warn(
            "kernel is bounded at the origin: its companion contains a point mass "
            "that a tabulated kernel cannot represent",
            RuntimeWarning,
            stacklevel=2,
        )
    W, exponent = companion_system(k, grid)
    if not W[0, 0] > 0:
        raise SingularSystemError("leading quadrature weight of the kernel vanishes")
    coef = solve_triangular(W, np.ones(grid.N), lower=True, check_finite=True)
    return CellKernel(grid, coef, exponent)


def pairing_residual(k: Kernel, l: CellKernel) -> float:
    """Max nodal residual ``|(k*l)(t_i) - 1|`` in the discretization that
    defines a computed companion."""
    W, exponent = companion_system(k, l.grid)
    if exponent != l.exponent:
        raise DomainError("companion was built with a different cell ansatz")
    return float(np.max(np.abs(W @ l.coefficients - 1.0)))


def pair_from_kernel(k: Kernel, grid: TimeGrid, pair_tol: float = DEFAULT_PAIR_TOLERANCE) -> KernelPair:
    l = companion_kernel(k, grid)
    res = pairing_residual(k, l)
    if res > pair_tol:
        raise SingularSystemError(f"companion pairing residual {res:.3e} exceeds {pair_tol:.1e}")
    return KernelPair(k, l, pair_tol)


def is_nonincreasing(k: Kernel, samples) -> bool:
    v = np.asarray(k.value(np.sort(np.asarray(samples, dtype=float))))
    return bool(np.all(np.diff(v) <= 1e-12 * np.maximum(1.0, np.abs(v[:-1]))))
