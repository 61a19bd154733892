"""Both sides of the duality estimates, assembled from discrete solutions.

Every verifier returns an :class:`EstimateReport` whose inequality reads
``lhs <= rhs``.  Time quadrature is organised around the kernel operator
``C_k`` (weights = exact cell integrals of ``k``) and a companion operator
``C_l``.  With the default ``companion="discrete"``, ``C_l`` is the exact
discrete inverse of ``C_k`` against the constant 1 (``C_l C_k = dt * ones``),
which turns the estimates into exact inequalities for the discrete scheme
(up to the nonlinear solver residual).  ``companion="analytic"`` uses the
cell integrals of the given ``l`` instead.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy import special

from .convolution import ConvOperator
from .errors import ConfigError, DomainError, GridMismatchError, PreconditionError
from .grids import SpaceGrid, TimeGrid
from .kernels import Kernel, KernelPair, Standard
from .solver import Field, Nonlinearity, ProblemSpec, StencilOperator, solve


def estimate_tolerance(lhs: float, rhs: float) -> float:
    return 1e-9 * max(abs(lhs), abs(rhs), 1.0)


@dataclass
class EstimateReport:
    estimate: str
    lhs: float
    rhs: float
    breakdown: dict
    metadata: dict = field(default_factory=dict)
    margin: float = field(init=False)
    tol: float = field(init=False)
    passed: bool = field(init=False)

    def __post_init__(self):
        self.lhs = float(self.lhs)
        self.rhs = float(self.rhs)
        self.margin = self.rhs - self.lhs
        self.tol = estimate_tolerance(self.lhs, self.rhs)
        self.passed = bool(self.margin >= -self.tol) and not self.metadata.get("skipped", False)

    def consistent(self, rel: float = 1e-12) -> bool:
        """Breakdown terms reproduce both sides."""
        ok = True
        for side, total in (("lhs", self.lhs), ("rhs", self.rhs)):
            s = math.fsum(self.breakdown.get(side, {}).values())
            ok &= abs(s - total) <= rel * max(abs(total), abs(s), 1e-300) or s == total
        return bool(ok)

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _report(name, lhs_terms, rhs_terms, metadata=None):
    lhs = math.fsum(lhs_terms.values())
    rhs = math.fsum(rhs_terms.values())
    return EstimateReport(name, lhs, rhs, {"lhs": dict(lhs_terms), "rhs": dict(rhs_terms)}, metadata or {})


# -- shared quadrature ----------------------------------------------------------

def companion_operators(pair: KernelPair, grid: TimeGrid, companion: str = "discrete"):
    op_k = ConvOperator.from_kernel(pair.k, grid)
    if companion == "discrete":
        return op_k, op_k.companion()
    if companion == "analytic":
        return op_k, ConvOperator.from_kernel(pair.l, grid)
    raise DomainError(f"companion must be 'discrete' or 'analytic', got {companion!r}")


def dual_energy_density(op_k: ConvOperator) -> np.ndarray:
    """Cell integrals of ``k(t) + k(T - t)``."""
    w = op_k.weights
    return w + w[::-1]


class _Energy:
    """Spatial energy map ``E`` with ``<E v, E w> = <v, A w>``."""

    def __init__(self, operator, space: SpaceGrid):
        if operator is None:
            operator = StencilOperator(space)
        self.apply_energy = operator.energy
        self.weight = operator.weight


def _check_rows(arr, grid: TimeGrid, space_size: int, name: str) -> np.ndarray:
    arr = np.asarray(arr, dtype=float)
    if arr.shape != (grid.N, space_size):
        raise GridMismatchError(f"{name} has shape {arr.shape}, expected {(grid.N, space_size)}")
    return arr


def _basic_parts(u, w, u0, f, pair, time, space, operator, companion):
    n = space.size
    u = _check_rows(u, time, n, "u")
    w = _check_rows(w, time, n, "w")
    f = _check_rows(f, time, n, "f")
    u0 = np.asarray(u0, dtype=float)
    if u0.shape != (n,):
        raise GridMismatchError(f"u0 has shape {u0.shape}, expected ({n},)")
    energy = _Energy(operator, space)
    op_k, op_l = companion_operators(pair, time, companion)
    dt, vol = time.dt, energy.weight
    grad_w = energy.apply_energy(w)
    phi = op_l.dual_conv(grad_w)
    phi_sq = vol * np.sum(phi * phi, axis=1)
    parts = {
        "wu": dt * vol * np.sum(w * u),
        "memory": 0.5 * float(np.sum(dual_energy_density(op_k) * phi_sq)),
        "initial": dt * vol * np.sum(w * u0[None, :]),
        "source": dt * vol * np.sum(w * op_l.conv(f)),
        "alt": dt * vol * float(np.sum(op_l.conv(grad_w) * grad_w)),
    }
    return parts, phi, op_k, op_l


def verify_basic(u, w, u0, f, pair, time, space, operator=None, companion="discrete") -> EstimateReport:
    """``int int w u + (1/2) int [k(T-t)+k(t)] |l dual* grad w|^2
    <= int int (u0 + l*f) w``.

    ``u, w, f`` are cell rows of shape ``(N, size)`` (times ``t_1..t_N``).
    """
    p, _, _, _ = _basic_parts(u, w, u0, f, pair, time, space, operator, companion)
    return _report("basic", {"wu": p["wu"], "memory": p["memory"]},
                   {"initial": p["initial"], "source": p["source"]}, {"companion": companion})


def verify_basic_alt(u, w, u0, f, pair, time, space, operator=None, companion="discrete") -> EstimateReport:
    """``int int w u + int int (l * grad w) . grad w <= int int (u0 + l*f) w``."""
    p, _, _, _ = _basic_parts(u, w, u0, f, pair, time, space, operator, companion)
    return _report("basic-alt", {"wu": p["wu"], "elliptic": p["alt"]},
                   {"initial": p["initial"], "source": p["source"]}, {"companion": companion})


def triple_weights(k: Kernel, grid: TimeGrid, order: int = 8) -> np.ndarray:
    """``Omega_m = int_{(m-1/2)dt}^{(m+1/2)dt} (k(s) - k(2s))/s ds`` for lags
    ``m = 1..N-1`` (entry 0 is unused and set to 0)."""
    N, dt = grid.N, grid.dt
    out = np.zeros(N)
    if N < 2:
        return out
    m = np.arange(1, N)
    lo, hi = (m - 0.5) * dt, (m + 0.5) * dt
    terms = k.power_terms
    if terms is not None:
        for c, beta in terms:
            if beta == 1.0:
                continue
            coef = c * (1.0 - 2.0 ** (beta - 1.0)) / special.gamma(beta) / (beta - 1.0)
            out[1:] += coef * (hi ** (beta - 1.0) - lo ** (beta - 1.0))
        return out
    x, wq = np.polynomial.legendre.leggauss(order)
    s = 0.5 * (lo[:, None] + hi[:, None]) + 0.5 * dt * x[None, :]
    vals = (np.asarray(k.value(s)) - np.asarray(k.value(2.0 * s))) / s
    out[1:] = 0.5 * dt * vals @ wq
    return out


def triple_constant(alpha: float) -> float:
    """``c(alpha)`` in ``(k(s) - k(2s))/s = c(alpha) s^{-alpha-1}`` for
    ``k = g_{1-alpha}``."""
    return (1.0 - 2.0 ** (-alpha)) / special.gamma(1.0 - alpha)


def triple_term(phi: np.ndarray, weights: np.ndarray, dt: float, vol: float) -> float:
    """``(1/2) sum_j dt sum_{m=1}^{j} Omega_m ||phi_j - phi_{j-m}||^2``."""
    N = phi.shape[0]
    total = 0.0
    for m in range(1, N):
        d = phi[m:] - phi[:-m]
        total += weights[m] * np.sum(d * d)
    return 0.5 * dt * vol * total


def verify_triple(u, w, u0, f, pair, time, space, operator=None, companion="discrete") -> EstimateReport:
    """Basic estimate with the added triple term for completely monotone k."""
    if not pair.k.completely_monotone:
        raise PreconditionError("triple-term estimate needs a completely monotone kernel")
    p, phi, _, _ = _basic_parts(u, w, u0, f, pair, time, space, operator, companion)
    vol = _Energy(operator, space).weight
    tri = triple_term(phi, triple_weights(pair.k, time), time.dt, vol)
    return _report("triple", {"wu": p["wu"], "memory": p["memory"], "triple": tri},
                   {"initial": p["initial"], "source": p["source"]}, {"companion": companion})


def gamma_alpha(alpha: float) -> float:
    return math.cos(alpha * math.pi / 2.0)


def verify_galpha(v, alpha: float, grid: TimeGrid) -> EstimateReport:
    """``cos(alpha pi/2) int |g_{alpha/2} * v|^2 <= int v (g_alpha * v)``."""
    if not (0.0 < alpha < 1.0):
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    v = grid.check_cells(v, "v")
    full = ConvOperator.from_kernel(Standard(1.0 - alpha), grid).conv(v)
    half = ConvOperator.from_kernel(Standard(1.0 - 0.5 * alpha), grid).conv(v)
    g = gamma_alpha(alpha)
    lhs = g * grid.dt * float(np.sum(half * half))
    rhs = grid.dt * float(np.sum(v * full))
    return _report("galpha", {"half_order": lhs}, {"pairing": rhs}, {"alpha": alpha, "gamma_alpha": g})


def pme_constant(m: float) -> float:
    """``C(m) = 2 (4m)^m / (m+1)^(m+1)``."""
    return 2.0 * (4.0 * m) ** m / (m + 1.0) ** (m + 1.0)


def _field_parts(field: Field, spec: ProblemSpec):
    if field.values.shape != (spec.time.N + 1, spec.space.size):
        raise GridMismatchError("field does not match the problem grids")
    u = field.cells
    w = spec.a_values[1:] * spec.nonlinearity.value(u)
    return u, w, spec.u0_values, spec.f_values[1:]


def verify_pme(field: Field, spec: ProblemSpec, companion="discrete", name="pme") -> EstimateReport:
    """``int int |u|^{m+1} + (1/a1) int [k(T-t)+k(t)] |l dual* grad(a Phi(u))|^2
    <= C(m) (a2/a1)^{m+1} (T ||u0||^{m+1} + ||l||_1^{m+1} ||f||^{m+1})``."""
    m = spec.nonlinearity.exponent
    if m is None:
        raise DomainError("the L_{m+1} estimate needs a power nonlinearity")
    if spec.a_bounds is None:
        raise ConfigError("coefficient bounds a1, a2 are required for the L_{m+1} estimate")
    a1, a2 = spec.a_bounds
    u, w, u0, f = _field_parts(field, spec)
    return pme_report(u, w, u0, f, m, a1, a2, spec.pair, spec.time, spec.space, spec.operator, companion, name)


def pme_report(u, w, u0, f, m, a1, a2, pair, time, space, operator=None, companion="discrete", name="pme"):
    p, _, _, op_l = _basic_parts(u, w, u0, f, pair, time, space, operator, companion)
    vol = _Energy(operator, space).weight
    dt, T = time.dt, time.T
    C = pme_constant(m)
    ratio = (a2 / a1) ** (m + 1)
    l_norm = float(np.sum(op_l.weights)) if companion == "discrete" else float(pair.l.antiderivative(T))
    u0_norm = vol * float(np.sum(np.abs(u0) ** (m + 1)))
    f_norm = dt * vol * float(np.sum(np.abs(f) ** (m + 1)))
    lhs = {"u_power": dt * vol * float(np.sum(np.abs(u) ** (m + 1))), "memory": 2.0 * p["memory"] / a1}
    rhs = {"initial": C * ratio * T * u0_norm, "source": C * ratio * l_norm ** (m + 1) * f_norm}
    meta = {"m": m, "a1": a1, "a2": a2, "C": C, "l_norm": l_norm, "companion": companion}
    return _report(name, lhs, rhs, meta)


def verify_basic_field(field: Field, spec: ProblemSpec, which="basic", companion="discrete") -> EstimateReport:
    """Run one of the basic-type verifiers on a solver trajectory with
    ``w = a Phi(u)``."""
    u, w, u0, f = _field_parts(field, spec)
    fn = {"basic": verify_basic, "basic-alt": verify_basic_alt, "triple": verify_triple}[which]
    return fn(u, w, u0, f, spec.pair, spec.time, spec.space, spec.operator, companion)


def verify_spectral(field: Field, spec: ProblemSpec, companion="discrete"):
    """Two reports: the inner-product inequality
    ``int (w, u) <= int (w, u0 + l*f)`` and the Hoelder-processed bound
    ``a1 int ||u||_{m+1}^{m+1} <= ||w||_2 (sqrt(T) ||u0||_2 + ||l||_1 ||f||_2)``
    (norms over space-time, ``||u0||_2`` over space)."""
    from .spectral import SpectralOperator

    if not isinstance(spec.operator, SpectralOperator):
        raise DomainError("verify_spectral needs a run with a spectral operator")
    m = spec.nonlinearity.exponent
    if m is None:
        raise DomainError("the spectral estimate needs a power nonlinearity")
    if spec.a_bounds is None:
        raise ConfigError("coefficient bounds a1, a2 are required")
    a1 = spec.a_bounds[0]
    u, w, u0, f = _field_parts(field, spec)
    time, vol = spec.time, spec.operator.weight
    dt = time.dt
    _, op_l = companion_operators(spec.pair, time, companion)
    inner = _report(
        "spectral-inner",
        {"wu": dt * vol * float(np.sum(w * u))},
        {"initial": dt * vol * float(np.sum(w * u0[None, :])), "source": dt * vol * float(np.sum(w * op_l.conv(f)))},
        {"companion": companion},
    )
    l_norm = float(np.sum(op_l.weights))
    w_norm = math.sqrt(dt * vol * float(np.sum(w * w)))
    u0_norm = math.sqrt(vol * float(np.sum(u0 * u0)))
    f_norm = math.sqrt(dt * vol * float(np.sum(f * f)))
    holder = _report(
        "spectral-holder",
        {"u_power": a1 * dt * vol * float(np.sum(np.abs(u) ** (m + 1)))},
        {"initial": w_norm * math.sqrt(time.T) * u0_norm, "source": w_norm * l_norm * f_norm},
        {"m": m, "a1": a1, "beta": spec.operator.beta, "critical_exponent": spec.operator.critical_exponent,
         "above_critical": m > spec.operator.critical_exponent, "companion": companion},
    )
    return inner, holder


# -- uniqueness -------------------------------------------------------------------

@dataclass
class UniquenessReport:
    gap: float
    pairing: float
    methods: tuple

    @property
    def passed(self) -> bool:
        return self.pairing >= -1e-12

    def to_dict(self):
        return _jsonable({"estimate": "uniqueness", "gap": self.gap, "pairing": self.pairing,
                          "methods": list(self.methods), "passed": self.passed})


def monotone_pairing(u1, u2, a, phi: Nonlinearity, dt: float, vol: float) -> float:
    """``int int a (Phi(u1) - Phi(u2)) (u1 - u2)``."""
    u1, u2 = np.asarray(u1, dtype=float), np.asarray(u2, dtype=float)
    return float(dt * vol * np.sum(np.asarray(a) * (phi.value(u1) - phi.value(u2)) * (u1 - u2)))


def uniqueness_gap(spec: ProblemSpec, methods=("newton", "picard"), fields=None) -> UniquenessReport:
    """Solve ``spec`` along two nonlinear-solver paths and compare."""
    if fields is None:
        fields = [solve(spec, method=m) for m in methods]
    f1, f2 = fields
    gap = float(np.max(np.abs(f1.values - f2.values)))
    pair = monotone_pairing(f1.cells, f2.cells, spec.a_values[1:], spec.nonlinearity, spec.time.dt,
                            spec.operator.weight)
    return UniquenessReport(gap, pair, tuple(methods))


# -- reaction entropy -------------------------------------------------------------

def verify_entropy(run, companion="discrete") -> EstimateReport:
    """Species-wise entropy bound
    ``sum_i ||z_i||_{L2(Q_T)} <= 4 sqrt(C(1) T) (d_max/d_min) sum_i ||z_i^0||_{L2}``,
    obtained from the m = 1 estimate for ``z = sum z_i`` with coefficient
    ``d_eff`` and zero source.  The scalar report is attached in the
    metadata; both must pass."""
    from .reaction import entropy_fields

    spec = run.spec
    if spec.nu_f != spec.nu_b:
        raise PreconditionError("entropy estimate needs equal forward and backward rates")
    if spec.m != 1:
        raise PreconditionError("entropy estimate is stated for m = 1")
    C = run.values
    low = float(C.min())
    if low < 1e-10:
        return EstimateReport("entropy", math.nan, math.nan, {"lhs": {}, "rhs": {}},
                              {"skipped": True, "reason": f"minimum concentration {low:.3e} below 1e-10"})
    ent = entropy_fields(C, spec.diffusion)
    d = np.asarray(spec.diffusion)
    a1, a2 = float(d.min()), float(d.max())
    time, space = run.time, run.space
    z_cells = ent.z[1:]
    scalar = pme_report(z_cells, ent.d_eff[1:] * z_cells, ent.z[0], np.zeros_like(z_cells), 1.0, a1, a2,
                        run.pair, time, space, None, companion, name="entropy-scalar")
    vol, dt = space.cell_volume, time.dt
    lhs = {f"z{i + 1}": math.sqrt(dt * vol * float(np.sum(ent.z_species[i, 1:] ** 2))) for i in range(4)}
    factor = 4.0 * math.sqrt(pme_constant(1.0) * time.T) * a2 / a1
    rhs = {f"z{i + 1}_initial": factor * math.sqrt(vol * float(np.sum(ent.z_species[i, 0] ** 2)))
           for i in range(4)}
    report = _report("entropy", lhs, rhs, {"factor": factor, "scalar_report": scalar.to_dict()})
    report.passed = report.passed and scalar.passed
    return report
