"""Uniform time and space grids.

Time conventions used across the package: a *cell array* on a ``TimeGrid``
has length ``N`` and holds the value of a piecewise-constant function on
``(t_j, t_{j+1}]``; it is reported at the right node ``t_{j+1}``.  A *node
array* has length ``N + 1`` and holds samples at ``t_0, ..., t_N``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import DomainError, GridMismatchError

BOUNDARY_CONDITIONS = ("dirichlet", "neumann", "periodic")


@dataclass(frozen=True)
class TimeGrid:
    T: float
    N: int

    def __post_init__(self):
        if not (np.isfinite(self.T) and self.T > 0):
            raise DomainError(f"time horizon must be positive, got {self.T}")
        if int(self.N) != self.N or self.N < 1:
            raise DomainError(f"step count must be a positive integer, got {self.N}")
        object.__setattr__(self, "T", float(self.T))
        object.__setattr__(self, "N", int(self.N))

    @property
    def dt(self) -> float:
        return self.T / self.N

    @cached_property
    def nodes(self) -> np.ndarray:
        t = np.arange(self.N + 1) * self.dt
        t[-1] = self.T
        return t

    @property
    def right_nodes(self) -> np.ndarray:
        return self.nodes[1:]

    @property
    def left_nodes(self) -> np.ndarray:
        return self.nodes[:-1]

    @property
    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.nodes[1:] + self.nodes[:-1])

    def refined(self, factor: int = 2) -> "TimeGrid":
        return TimeGrid(self.T, self.N * factor)

    def check_cells(self, values, name="array") -> np.ndarray:
        arr = np.asarray(values, dtype=float)
        if arr.shape[:1] != (self.N,):
            raise GridMismatchError(
                f"{name} has leading length {arr.shape[:1]}, expected {self.N} cell values"
            )
        return arr

    def check_nodes(self, values, name="array") -> np.ndarray:
        arr = np.asarray(values, dtype=float)
        if arr.shape[:1] != (self.N + 1,):
            raise GridMismatchError(
                f"{name} has leading length {arr.shape[:1]}, expected {self.N + 1} node values"
            )
        return arr


def _difference_1d(M: int, h: float, bc: str) -> sp.csr_matrix:
    """Forward-difference gradient from unknowns to faces, so that
    ``G.T @ G`` is the standard negative 3-point Laplacian."""
    if bc == "dirichlet":
        # faces between 0|u_1, u_1|u_2, ..., u_M|0
        G = sp.diags([np.ones(M), -np.ones(M)], [0, -1], shape=(M + 1, M))
    elif bc == "neumann":
        G = sp.diags([-np.ones(M - 1), np.ones(M - 1)], [0, 1], shape=(M - 1, M))
    elif bc == "periodic":
        G = sp.diags([-np.ones(M), np.ones(M - 1)], [0, 1], shape=(M, M)).tolil()
        G[M - 1, 0] = 1.0
    else:
        raise DomainError(f"unknown boundary condition {bc!r}")
    return sp.csr_matrix(G) / h


@dataclass(frozen=True)
class SpaceGrid:
    """Uniform grid on ``[0, L]^dimension``.

    Dirichlet grids hold the ``M`` interior nodes ``x_i = i h`` with
    ``h = L/(M+1)``; Neumann grids are cell-centred with ``h = L/M``;
    periodic grids hold ``x_i = i h``, ``h = L/M``.
    """

    L: float
    M: int
    bc: str = "dirichlet"
    dimension: int = 1

    def __post_init__(self):
        bc = str(self.bc).lower()
        if bc not in BOUNDARY_CONDITIONS:
            raise DomainError(f"boundary condition must be one of {BOUNDARY_CONDITIONS}, got {self.bc!r}")
        object.__setattr__(self, "bc", bc)
        if int(self.M) != self.M or self.M < 2:
            raise DomainError(f"need at least 2 points per axis, got {self.M}")
        if self.dimension not in (1, 2):
            raise DomainError(f"dimension must be 1 or 2, got {self.dimension}")
        if not (np.isfinite(self.L) and self.L > 0):
            raise DomainError(f"extent must be positive, got {self.L}")
        object.__setattr__(self, "L", float(self.L))
        object.__setattr__(self, "M", int(self.M))

    @property
    def h(self) -> float:
        return self.L / (self.M + 1) if self.bc == "dirichlet" else self.L / self.M

    @property
    def size(self) -> int:
        return self.M ** self.dimension

    @property
    def cell_volume(self) -> float:
        return self.h ** self.dimension

    @cached_property
    def axis(self) -> np.ndarray:
        i = np.arange(self.M)
        if self.bc == "dirichlet":
            return (i + 1) * self.h
        if self.bc == "neumann":
            return (i + 0.5) * self.h
        return i * self.h

    @cached_property
    def coordinates(self) -> tuple:
        """Flattened coordinate arrays, one per axis (C ordering)."""
        if self.dimension == 1:
            return (self.axis,)
        X, Y = np.meshgrid(self.axis, self.axis, indexing="ij")
        return (X.ravel(), Y.ravel())

    @cached_property
    def gradient(self) -> sp.csr_matrix:
        G1 = _difference_1d(self.M, self.h, self.bc)
        if self.dimension == 1:
            return G1
        eye = sp.identity(self.M, format="csr")
        return sp.csr_matrix(sp.vstack([sp.kron(G1, eye), sp.kron(eye, G1)]))

    @cached_property
    def stiffness(self) -> sp.csr_matrix:
        """The positive semidefinite operator ``-Laplacian = G^T G``."""
        G = self.gradient
        return sp.csr_matrix(G.T @ G)

    # time-space helpers: arrays of shape (..., size)
    def inner(self, v, w) -> np.ndarray:
        return self.cell_volume * np.sum(np.asarray(v) * np.asarray(w), axis=-1)

    def integral(self, v) -> np.ndarray:
        return self.cell_volume * np.sum(np.asarray(v), axis=-1)

    def energy(self, v) -> np.ndarray:
        """Apply the gradient along the last axis."""
        v = np.asarray(v, dtype=float)
        flat = v.reshape(-1, self.size)
        out = (self.gradient @ flat.T).T
        return out.reshape(v.shape[:-1] + (out.shape[-1],))

    def apply(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        flat = v.reshape(-1, self.size)
        return (self.stiffness @ flat.T).T.reshape(v.shape)

    def sample(self, func, t=None) -> np.ndarray:
        if t is None:
            return np.broadcast_to(np.asarray(func(*self.coordinates), dtype=float), (self.size,)).copy()
        return np.broadcast_to(np.asarray(func(t, *self.coordinates), dtype=float), (self.size,)).copy()

    def check(self, values, name="array") -> np.ndarray:
        arr = np.asarray(values, dtype=float)
        if arr.shape[-1:] != (self.size,):
            raise GridMismatchError(f"{name} has trailing length {arr.shape[-1:]}, expected {self.size}")
        return arr
