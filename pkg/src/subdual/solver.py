"""Implicit solver for  d/dt (k * [u - u0]) + A (a Phi(u)) = f.

``A`` is the negative discrete Laplacian of a :class:`SpaceGrid` (or any
object with the same ``apply`` / ``solve_linearized`` interface, such as the
spectral fractional Laplacian).  The memory term is the L1-type sum

    D_n u = sum_{j=1}^{n} b_{n-j} (u^j - u^{j-1}),  b_j = (1/dt) int_{t_j}^{t_{j+1}} k,

and every step solves ``b_0 u + A(a Phi(u)) = f^n + b_0 u^{n-1} - history``
by damped Newton, falling back to a lagged-diffusivity fixed point.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional

import numpy as np
import scipy.sparse as sp
from scipy import special
from scipy.sparse.linalg import spsolve

from .convolution import ConvOperator
from .errors import DomainError, GridMismatchError, PositivityError, SolverError
from .grids import SpaceGrid, TimeGrid
from .kernels import KernelPair, standard_pair

NEGATIVE_FLOOR = -1e-10


# -- nonlinearities -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Nonlinearity:
    """Monotone increasing ``Phi`` with ``Phi(0) = 0``.

    ``kind`` is ``"power"`` (``sign(u)|u|^m``), ``"linear"`` or ``"table"``
    (piecewise linear through ``(table_s, table_phi)``, linearly continued).
    """

    kind: str = "power"
    m: float = 1.0
    table_s: Optional[np.ndarray] = None
    table_phi: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in ("power", "linear", "table"):
            raise DomainError(f"unknown nonlinearity {self.kind!r}")
        if self.kind == "linear":
            object.__setattr__(self, "m", 1.0)
        if self.kind in ("power", "linear") and not self.m >= 1:
            raise DomainError(f"exponent m must be >= 1, got {self.m}")
        if self.kind == "table":
            s = np.asarray(self.table_s, dtype=float)
            phi = np.asarray(self.table_phi, dtype=float)
            if s.ndim != 1 or s.shape != phi.shape or s.size < 2:
                raise DomainError("nonlinearity table needs two matching columns")
            if np.any(np.diff(s) <= 0) or np.any(np.diff(phi) <= 0):
                raise DomainError("nonlinearity table must be strictly increasing")
            if not (s[0] <= 0 <= s[-1]) or abs(np.interp(0.0, s, phi)) > 1e-12:
                raise DomainError("nonlinearity table must satisfy Phi(0) = 0")
            object.__setattr__(self, "table_s", s)
            object.__setattr__(self, "table_phi", phi)

    @classmethod
    def power(cls, m: float) -> "Nonlinearity":
        return cls("power", float(m))

    @classmethod
    def from_csv(cls, path) -> "Nonlinearity":
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"file not found: {path}")
        data = np.loadtxt(path, delimiter=",", ndmin=2, comments="#")
        return cls("table", 1.0, data[:, 0], data[:, 1])

    @property
    def exponent(self):
        return None if self.kind == "table" else self.m

    def _slopes(self):
        return np.diff(self.table_phi) / np.diff(self.table_s)

    def value(self, u):
        u = np.asarray(u, dtype=float)
        if self.kind == "table":
            s, phi, sl = self.table_s, self.table_phi, self._slopes()
            out = np.interp(u, s, phi)
            out = np.where(u < s[0], phi[0] + sl[0] * (u - s[0]), out)
            return np.where(u > s[-1], phi[-1] + sl[-1] * (u - s[-1]), out)
        if self.m == 1.0:
            return u.copy()
        return np.sign(u) * np.abs(u) ** self.m

    def derivative(self, u):
        u = np.asarray(u, dtype=float)
        if self.kind == "table":
            s, sl = self.table_s, self._slopes()
            j = np.clip(np.searchsorted(s, u, side="right") - 1, 0, sl.size - 1)
            return sl[j]
        if self.m == 1.0:
            return np.ones_like(u)
        return self.m * np.abs(u) ** (self.m - 1.0)

    def secant(self, u):
        """``Phi(u)/u``, continued by ``Phi'(u)`` near 0."""
        u = np.asarray(u, dtype=float)
        small = np.abs(u) < 1e-300
        safe = np.where(small, 1.0, u)
        return np.where(small, self.derivative(u), self.value(u) / safe)


# -- options, problem, field --------------------------------------------------

@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-11
    max_newton: int = 50
    max_armijo: int = 30
    max_fixed_point: int = 500
    eps_deg: float = 1e-14
    method: str = "newton"  # newton (with fixed-point fallback) | newton-only | picard

    def __post_init__(self):
        if self.method not in ("newton", "newton-only", "picard"):
            raise DomainError(f"unknown nonlinear method {self.method!r}")
        for name in ("tol", "eps_deg"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive")


def _sample_space_time(value, time: TimeGrid, space: SpaceGrid, name: str) -> np.ndarray:
    shape = (time.N + 1, space.size)
    if callable(value):
        out = np.empty(shape)
        for i, t in enumerate(time.nodes):
            out[i] = space.sample(value, t)
        return out
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return np.full(shape, float(arr))
    if arr.shape == (space.size,):
        return np.broadcast_to(arr, shape).copy()
    if arr.shape != shape:
        raise GridMismatchError(f"{name} has shape {arr.shape}, expected {shape}")
    return arr.copy()


def _sample_space(value, space: SpaceGrid, name: str) -> np.ndarray:
    if callable(value):
        return space.sample(value)
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return np.full(space.size, float(arr))
    if arr.shape != (space.size,):
        raise GridMismatchError(f"{name} has shape {arr.shape}, expected ({space.size},)")
    return arr.copy()


@dataclass(eq=False)
class ProblemSpec:
    """Data of one run.  ``a``, ``f`` may be constants, arrays of shape
    ``(N+1, size)`` or callables ``(t, *x)``; ``u0`` a constant, array or
    callable ``(*x)``.  Arrays are sampled once at construction."""

    pair: KernelPair
    time: TimeGrid
    space: SpaceGrid
    nonlinearity: Nonlinearity = field(default_factory=Nonlinearity)
    a: Any = 1.0
    u0: Any = 0.0
    f: Any = 0.0
    a_bounds: Optional[tuple] = None
    nonnegative: bool = True
    options: SolverOptions = field(default_factory=SolverOptions)
    operator: Any = None

    def __post_init__(self):
        self.a_values = _sample_space_time(self.a, self.time, self.space, "a")
        self.f_values = _sample_space_time(self.f, self.time, self.space, "f")
        self.u0_values = _sample_space(self.u0, self.space, "u0")
        for name, arr in (("a", self.a_values), ("f", self.f_values), ("u0", self.u0_values)):
            if not np.all(np.isfinite(arr)):
                raise DomainError(f"{name} contains non-finite values")
        if self.a_bounds is not None:
            a1, a2 = (float(x) for x in self.a_bounds)
            if not a1 > 0:
                raise DomainError("coefficient lower bound must be positive")
            if a2 < a1:
                raise DomainError("coefficient upper bound is below the lower bound")
            slack = 1e-12 * max(1.0, a2)
            if self.a_values.min() < a1 - slack or self.a_values.max() > a2 + slack:
                raise DomainError(
                    f"coefficient range [{self.a_values.min():.6g}, {self.a_values.max():.6g}] "
                    f"violates declared bounds [{a1}, {a2}]"
                )
            self.a_bounds = (a1, a2)
        elif self.a_values.min() <= 0:
            raise DomainError("coefficient must be positive")
        if self.nonnegative and self.u0_values.min() < 0:
            raise DomainError("initial state must be nonnegative when nonnegativity is declared")
        if self.operator is None:
            self.operator = StencilOperator(self.space)

    @property
    def weights(self) -> np.ndarray:
        return conv_weights(self.pair, self.time)

    def with_options(self, **changes) -> "ProblemSpec":
        from dataclasses import replace

        return replace(self, options=replace(self.options, **changes), a=self.a_values, f=self.f_values,
                       u0=self.u0_values)


@dataclass(frozen=True, eq=False)
class Field:
    """Space-time values, row ``i`` at time ``t_i`` (row 0 is the initial
    state)."""

    values: np.ndarray
    time: TimeGrid
    space: SpaceGrid
    nonneg: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.time.N + 1, self.space.size):
            raise GridMismatchError(f"field shape {v.shape} does not match grids")
        if not np.all(np.isfinite(v)):
            raise DomainError("field contains non-finite values")
        if self.nonneg and v.min() < NEGATIVE_FLOOR:
            raise PositivityError(f"field minimum {v.min():.3e} below {NEGATIVE_FLOOR}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def cells(self) -> np.ndarray:
        """Values at ``t_1..t_N`` (one row per time cell)."""
        return self.values[1:]


def conv_weights(pair: KernelPair, grid: TimeGrid) -> np.ndarray:
    """``b_j = (1/dt) int_{t_j}^{t_{j+1}} k``."""
    return pair.k.cell_integrals(grid) / grid.dt


# -- elliptic part --------------------------------------------------------------

class StencilOperator:
    """Negative finite-difference Laplacian ``G^T G`` on a SpaceGrid."""

    def __init__(self, space: SpaceGrid):
        self.space = space
        self.matrix = space.stiffness

    def apply(self, v):
        return self.matrix @ v

    def energy(self, v):
        return self.space.energy(v)

    @property
    def weight(self) -> float:
        return self.space.cell_volume

    def solve_linearized(self, b0, diag, rhs):
        n = self.space.size
        J = b0 * sp.identity(n, format="csc") + sp.csc_matrix(self.matrix @ sp.diags(diag))
        return spsolve(J, rhs)


# -- stepping -------------------------------------------------------------------

class _Stall(Exception):
    def __init__(self, history):
        self.history = history


def _inf(v):
    return float(np.max(np.abs(v))) if np.size(v) else 0.0


def _newton(u, rhs, b0, a, op, phi, opts, project, tol):
    def resid(x):
        return b0 * x + op.apply(a * phi.value(x)) - rhs

    u = project(u)
    r = resid(u)
    nr = _inf(r)
    history = [nr]
    for _ in range(opts.max_newton):
        if nr <= tol:
            return u, history
        du = op.solve_linearized(b0, a * phi.derivative(u), -r)
        if not np.all(np.isfinite(du)):
            raise _Stall(history)
        lam = 1.0
        for _ in range(opts.max_armijo + 1):
            trial = project(u + lam * du)
            rt = resid(trial)
            nt = _inf(rt)
            if nt <= (1.0 - 1e-4 * lam) * nr:
                break
            lam *= 0.5
        else:
            raise _Stall(history)
        u, r, nr = trial, rt, nt
        history.append(nr)
    if nr <= tol:
        return u, history
    raise _Stall(history)


def _fixed_point(u, rhs, b0, a, op, phi, opts, project, tol):
    """Lagged diffusivity ``(b0 I + A diag(a Phi(u_k)/u_k)) v = rhs`` with
    the relaxed update ``u + theta (v - u)``.

    Linearized, the plain iteration has eigenvalues in ``[-(p-1), 0]`` with
    ``p = max u Phi'(u) / Phi(u)`` (``p = m`` for powers), so
    ``theta = 1/p`` makes it a contraction.
    """
    def resid(x):
        return b0 * x + op.apply(a * phi.value(x)) - rhs

    u = project(u)
    history = [_inf(resid(u))]
    for _ in range(opts.max_fixed_point):
        if history[-1] <= tol:
            return u, history
        secant = phi.secant(u)
        elasticity = float(np.max(phi.derivative(u) / np.where(secant > 0, secant, 1.0)))
        theta = 1.0 / max(elasticity, 1.0)
        target = op.solve_linearized(b0, a * secant, rhs)
        u = project(u + theta * (target - u))
        history.append(_inf(resid(u)))
        if not np.isfinite(history[-1]):
            raise _Stall(history)
    if history[-1] <= tol:
        return u, history
    raise _Stall(history)


def solve(spec: ProblemSpec, method: Optional[str] = None) -> Field:
    """March the scheme over all time steps and return the trajectory."""
    opts = spec.options
    method = method or opts.method
    time, phi, op = spec.time, spec.nonlinearity, spec.operator
    b = conv_weights(spec.pair, time)
    b0 = b[0]
    N = time.N
    U = np.empty((N + 1, spec.space.size))
    U[0] = spec.u0_values
    incr = np.zeros_like(U)
    if spec.nonnegative:
        eps = opts.eps_deg

        def project(x):
            return np.maximum(x, eps)
    else:
        def project(x):
            return x

    iterations = []
    fallbacks = 0
    for n in range(1, N + 1):
        history = b[n - 1 : 0 : -1] @ incr[1:n] if n > 1 else 0.0
        rhs = spec.f_values[n] + b0 * U[n - 1] - history
        a = spec.a_values[n]
        tol = opts.tol * (1.0 + _inf(rhs))
        guess = U[n - 1].copy()
        diagnostics = {"step": n, "t": float(time.nodes[n])}
        try:
            if method == "picard":
                un, hist = _fixed_point(guess, rhs, b0, a, op, phi, opts, project, tol)
            else:
                try:
                    un, hist = _newton(guess, rhs, b0, a, op, phi, opts, project, tol)
                except _Stall as stall:
                    if method == "newton-only":
                        raise
                    diagnostics["newton_history"] = stall.history
                    fallbacks += 1
                    un, hist = _fixed_point(guess, rhs, b0, a, op, phi, opts, project, tol)
        except _Stall as stall:
            diagnostics["residual_history"] = stall.history
            raise SolverError(f"nonlinear step {n} did not converge", diagnostics) from None
        if spec.nonnegative and un.min() < NEGATIVE_FLOOR:
            node = int(np.argmin(un))
            raise PositivityError(
                f"solution dropped to {un[node]:.3e} at step {n}, node {node}", n, node, float(un[node])
            )
        U[n] = un
        incr[n] = un - U[n - 1]
        iterations.append(len(hist) - 1)
    meta = {"method": method, "iterations": iterations, "fallbacks": fallbacks}
    return Field(U, time, spec.space, spec.nonnegative, meta)


def memory_term(values: np.ndarray, b: np.ndarray, dt: float) -> np.ndarray:
    """``D_n u`` for ``n = 1..N`` from node rows ``u^0..u^N``."""
    incr = np.diff(values, axis=0)
    return ConvOperator(b * dt, dt).conv(incr) / dt


def residual(spec: ProblemSpec, field: Field) -> np.ndarray:
    """Per-node residual of the discrete equations (row 0 is zero)."""
    U = np.asarray(field.values if isinstance(field, Field) else field, dtype=float)
    if U.shape != (spec.time.N + 1, spec.space.size):
        raise GridMismatchError(f"field shape {U.shape} does not match the problem grids")
    b = conv_weights(spec.pair, spec.time)
    D = memory_term(U, b, spec.time.dt)
    flux = spec.a_values[1:] * spec.nonlinearity.value(U[1:])
    ell = np.stack([spec.operator.apply(row) for row in flux])
    out = np.zeros_like(U)
    out[1:] = D + ell - spec.f_values[1:]
    return out


def step_tolerances(spec: ProblemSpec, field: Field) -> np.ndarray:
    """``tol * (1 + ||rhs_n||_inf)`` for each step, the solver's contract."""
    U = field.values
    b = conv_weights(spec.pair, spec.time)
    b0 = b[0]
    D = memory_term(U, b, spec.time.dt)
    rhs = spec.f_values[1:] + b0 * U[1:] - D
    return spec.options.tol * (1.0 + np.max(np.abs(rhs), axis=1))


# -- manufactured solutions -------------------------------------------------------

def manufactured_dirichlet(alpha: float, steps: int, points: int, T: float = 1.0, m: int = 1):
    """Problem with exact solution ``(1+t^2) sin(pi x)`` on (0,1),
    ``a = 1``, ``k = g_{1-alpha}``.  Returns ``(spec, exact)`` with
    ``exact(t, x)``."""
    if m != 1:
        raise DomainError("the manufactured source is derived for m = 1")
    c = 2.0 / special.gamma(3.0 - alpha)

    def exact(t, x):
        return (1.0 + t * t) * np.sin(np.pi * x)

    def source(t, x):
        return c * t ** (2.0 - alpha) * np.sin(np.pi * x) + np.pi ** 2 * exact(t, x)

    spec = ProblemSpec(
        pair=standard_pair(alpha),
        time=TimeGrid(T, steps),
        space=SpaceGrid(1.0, points, "dirichlet"),
        a=1.0,
        u0=lambda x: np.sin(np.pi * x),
        f=source,
        a_bounds=(1.0, 1.0),
    )
    return spec, exact


def max_error(field: Field, exact: Callable) -> float:
    ref = np.stack([field.space.sample(exact, t) for t in field.time.nodes])
    return float(np.max(np.abs(field.values - ref)))
