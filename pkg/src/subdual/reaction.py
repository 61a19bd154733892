"""Four-species reversible reaction  a1 A1 + a2 A2 <-> a3 A3 + a4 A4  with
mass-action kinetics and subdiffusive transport

    d/dt (k * [c_i - c_i^0]) - d_i Laplace(c_i^m) = sigma_i a_i r(c),
    r = -nu_f c1^a1 c2^a2 + nu_b c3^a3 c4^a4,  sigma = (+, +, -, -),

on a Neumann grid.  Each step is solved monolithically by Newton on all
``4 M`` unknowns.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .errors import DomainError, PositivityError, SolverError
from .grids import SpaceGrid, TimeGrid
from .kernels import KernelPair
from .solver import Field, Nonlinearity, SolverOptions, conv_weights, memory_term

SIGNS = np.array([1.0, 1.0, -1.0, -1.0])
POSITIVITY_FLOOR = -1e-8
ENTROPY_FLOOR = 1e-10


@dataclass(eq=False)
class ReactionSpec:
    stoichiometry: tuple
    nu_f: float
    nu_b: float
    diffusion: tuple
    c0: np.ndarray  # shape (4, size)
    m: float = 1.0

    def __post_init__(self):
        a = tuple(int(x) for x in self.stoichiometry)
        if len(a) != 4 or any(x != y for x, y in zip(a, self.stoichiometry)) or min(a) < 1:
            raise DomainError("stoichiometric coefficients must be four positive integers")
        self.stoichiometry = a
        d = tuple(float(x) for x in self.diffusion)
        if len(d) != 4 or min(d) <= 0:
            raise DomainError("diffusion coefficients must be four positive numbers")
        self.diffusion = d
        if self.nu_f < 0 or self.nu_b < 0:
            raise DomainError("rate constants must be nonnegative")
        if not self.m >= 1:
            raise DomainError(f"exponent m must be >= 1, got {self.m}")
        c0 = np.asarray(self.c0, dtype=float)
        if c0.ndim != 2 or c0.shape[0] != 4:
            raise DomainError("initial concentrations must have shape (4, size)")
        if not np.all(np.isfinite(c0)) or c0.min() < 0:
            raise DomainError("initial concentrations must be finite and nonnegative")
        self.c0 = c0

    @property
    def coefficients(self) -> np.ndarray:
        return np.asarray(self.stoichiometry, dtype=float)


def _rate(c, a, nu_f, nu_b):
    return -nu_f * c[0] ** a[0] * c[1] ** a[1] + nu_b * c[2] ** a[2] * c[3] ** a[3]


def reaction_rate(c, spec: ReactionSpec):
    """Mass-action rate ``r(c)``; ``c`` has leading axis of length 4."""
    c = np.asarray(c, dtype=float)
    if c.shape[:1] != (4,):
        raise DomainError("concentration vector must have 4 components")
    if np.any(c < 0):
        raise DomainError("concentrations must be nonnegative")
    return _rate(c, spec.stoichiometry, spec.nu_f, spec.nu_b)


def reaction_vector(c, spec: ReactionSpec):
    """Right-hand side ``sigma_i a_i r(c)`` for each species."""
    r = reaction_rate(c, spec)
    shape = (4,) + (1,) * (np.ndim(r))
    return (SIGNS * spec.coefficients).reshape(shape) * r


def _rate_gradient(c, a, nu_f, nu_b):
    fwd = [a[0] * np.power(c[0], a[0] - 1) * c[1] ** a[1], a[1] * c[0] ** a[0] * np.power(c[1], a[1] - 1)]
    bwd = [a[2] * np.power(c[2], a[2] - 1) * c[3] ** a[3], a[3] * c[2] ** a[2] * np.power(c[3], a[3] - 1)]
    return np.stack([-nu_f * fwd[0], -nu_f * fwd[1], nu_b * bwd[0], nu_b * bwd[1]])


@dataclass(frozen=True, eq=False)
class ReactionRun:
    fields: tuple
    spec: ReactionSpec
    pair: KernelPair
    time: TimeGrid
    space: SpaceGrid
    options: SolverOptions
    min_concentration: np.ndarray  # per step, shape (N+1, 4)
    meta: dict = field(default_factory=dict)

    @property
    def values(self) -> np.ndarray:
        """Array of shape ``(4, N+1, size)``."""
        return np.stack([f.values for f in self.fields])


def simulate(spec: ReactionSpec, pair: KernelPair, time: TimeGrid, space: SpaceGrid,
             options: Optional[SolverOptions] = None) -> ReactionRun:
    if space.bc != "neumann":
        raise DomainError("the reaction system is posed with Neumann boundary conditions")
    if spec.c0.shape[1] != space.size:
        raise DomainError("initial concentrations do not match the space grid")
    opts = options or SolverOptions()
    a = spec.stoichiometry
    coef = SIGNS * spec.coefficients
    d = np.asarray(spec.diffusion)
    phi = Nonlinearity.power(spec.m)
    S = space.stiffness
    n = space.size
    b = conv_weights(pair, time)
    b0 = b[0]
    N = time.N
    C = np.empty((4, N + 1, n))
    C[:, 0] = spec.c0
    incr = np.zeros_like(C)
    mins = np.empty((N + 1, 4))
    mins[0] = spec.c0.min(axis=1)
    eye = sp.identity(n, format="csr")
    iterations = []

    def resid(x, rhs):
        r = _rate(x, a, spec.nu_f, spec.nu_b)
        out = np.empty_like(x)
        for i in range(4):
            out[i] = b0 * x[i] + d[i] * (S @ phi.value(x[i])) - coef[i] * r - rhs[i]
        return out

    for step in range(1, N + 1):
        hist = np.einsum("j,ijk->ik", b[step - 1 : 0 : -1], incr[:, 1:step]) if step > 1 else 0.0
        rhs = b0 * C[:, step - 1] - hist
        tol = opts.tol * (1.0 + float(np.max(np.abs(rhs))))
        x = C[:, step - 1].copy()
        R = resid(x, rhs)
        nr = float(np.max(np.abs(R)))
        history = [nr]
        for _ in range(opts.max_newton):
            if nr <= tol:
                break
            grad = _rate_gradient(np.maximum(x, 0.0), a, spec.nu_f, spec.nu_b)
            blocks = [[None] * 4 for _ in range(4)]
            for i in range(4):
                for j in range(4):
                    blk = -coef[i] * sp.diags(grad[j])
                    if i == j:
                        blk = blk + b0 * eye + d[i] * (S @ sp.diags(phi.derivative(x[i])))
                    blocks[i][j] = blk
            J = sp.bmat(blocks, format="csc")
            dx = spsolve(J, -R.ravel()).reshape(4, n)
            lam = 1.0
            for _ in range(opts.max_armijo + 1):
                trial = x + lam * dx
                Rt = resid(trial, rhs)
                nt = float(np.max(np.abs(Rt)))
                if nt <= (1.0 - 1e-4 * lam) * nr:
                    break
                lam *= 0.5
            else:
                raise SolverError(f"reaction step {step}: line search failed",
                                  {"step": step, "residual_history": history})
            x, R, nr = trial, Rt, nt
            history.append(nr)
        if nr > tol:
            raise SolverError(f"reaction step {step} did not converge",
                              {"step": step, "residual_history": history})
        low = x.min()
        if low < POSITIVITY_FLOOR:
            sp_i, node = np.unravel_index(int(np.argmin(x)), x.shape)
            raise PositivityError(
                f"species {sp_i + 1} dropped to {low:.3e} at step {step}, node {node}", step, int(node), float(low)
            )
        C[:, step] = x
        incr[:, step] = x - C[:, step - 1]
        mins[step] = x.min(axis=1)
        iterations.append(len(history) - 1)
    fields = tuple(Field(C[i], time, space, nonneg=False) for i in range(4))
    return ReactionRun(fields, spec, pair, time, space, opts, mins, {"iterations": iterations})


# -- derived scalar fields --------------------------------------------------------

@dataclass(frozen=True, eq=False)
class MassCombination:
    u: np.ndarray  # (N+1, size)
    a_eff: np.ndarray  # (N+1, size), nan where u = 0
    u0: np.ndarray
    bounds: tuple  # observed (min, max) of a_eff
    within_declared: bool


def mass_combination(run: ReactionRun) -> MassCombination:
    """``u = a3 c1 + a4 c2 + a1 c3 + a2 c4`` and the effective coefficient
    ``a_eff = (d1 a3 c1^m + d2 a4 c2^m + d3 a1 c3^m + d4 a2 c4^m) / u^m``."""
    spec = run.spec
    a = spec.coefficients
    weights = np.array([a[2], a[3], a[0], a[1]])
    d = np.asarray(spec.diffusion)
    C = run.values
    phi = Nonlinearity.power(spec.m)
    u = np.tensordot(weights, C, axes=1)
    flux = np.tensordot(weights * d, phi.value(C), axes=1)
    zero = u == 0
    if np.any(zero & np.any(C != 0, axis=0)):
        raise DomainError("mass combination vanishes at a node with nonzero concentrations")
    a_eff = np.where(zero, np.nan, flux / np.where(zero, 1.0, phi.value(u)))
    finite = a_eff[np.isfinite(a_eff)]
    lo, hi = (float(finite.min()), float(finite.max())) if finite.size else (np.nan, np.nan)
    slack = 1e-12 * max(d)
    within = bool(finite.size == 0 or (lo >= min(d) - slack and hi <= max(d) + slack))
    if spec.m == 1 and not within:
        raise DomainError(f"effective coefficient range [{lo}, {hi}] leaves [min d, max d]")
    u0 = weights @ spec.c0
    return MassCombination(u, a_eff, u0, (lo, hi), within)


def combination_residual(run: ReactionRun, combo: Optional[MassCombination] = None) -> np.ndarray:
    """Residual of ``D(u) - Laplace(a_eff u^m) = 0`` at ``t_1..t_N``."""
    combo = combo or mass_combination(run)
    phi = Nonlinearity.power(run.spec.m)
    b = conv_weights(run.pair, run.time)
    D = memory_term(combo.u, b, run.time.dt)
    flux = np.nan_to_num(combo.a_eff[1:]) * phi.value(combo.u[1:])
    return D + np.stack([run.space.stiffness @ row for row in flux])


def entropy_density(c):
    c = np.asarray(c, dtype=float)
    return c * np.log(c) - c + 1.0


@dataclass(frozen=True, eq=False)
class EntropyFields:
    z_species: np.ndarray  # (4, N+1, size)
    z: np.ndarray
    d_eff: np.ndarray


def entropy_fields(values, diffusion) -> EntropyFields:
    """``z_i = c_i log c_i - c_i + 1``, ``z = sum z_i``,
    ``d_eff = sum d_i z_i / z`` (``min d`` where ``z = 0``)."""
    C = np.asarray(values, dtype=float)
    if np.any(C <= 0):
        raise DomainError("entropy variables need strictly positive concentrations")
    d = np.asarray(diffusion, dtype=float)
    zi = entropy_density(C)
    zi = np.maximum(zi, 0.0)  # rounding near c = 1
    z = zi.sum(axis=0)
    num = np.tensordot(d, zi, axes=1)
    d_eff = np.where(z > 0, num / np.where(z > 0, z, 1.0), d.min())
    slack = 1e-12 * d.max()
    if d_eff.min() < d.min() - slack or d_eff.max() > d.max() + slack:
        raise DomainError("effective entropy diffusivity leaves [min d, max d]")
    return EntropyFields(zi, z, d_eff)


def entropy_production(c, spec: ReactionSpec):
    """``sum_i sigma_i a_i r(c) log c_i``; nonpositive when ``nu_f = nu_b``."""
    c = np.asarray(c, dtype=float)
    vec = reaction_vector(c, spec)
    return np.sum(vec * np.log(c), axis=0)


def reform_derivative(k, v, grid: TimeGrid) -> np.ndarray:
    """``k(t)(v(t) - v(0)) + int_0^t (-k'(t-tau)) (v(t) - v(tau)) dtau`` at the
    nodes, for node samples ``v`` and a kernel bounded at the origin
    (trapezoidal rule in ``tau``)."""
    from .convolution import _require_bounded

    _require_bounded(k)
    v = grid.check_nodes(v, "v")
    dt = grid.dt
    k_nodes = np.concatenate([[k.limit_at_zero()], k.value(grid.right_nodes)])
    slope = np.concatenate([[0.0], -k.derivative(grid.right_nodes)])
    out = np.zeros(grid.N + 1)
    for i in range(1, grid.N + 1):
        # integrand at tau = t_j uses the lag t_i - t_j; the tau = t_i term is 0
        integrand = slope[i::-1] * (v[i] - v[: i + 1])
        out[i] = k_nodes[i] * (v[i] - v[0]) + np.trapezoid(integrand, dx=dt)
    return out
