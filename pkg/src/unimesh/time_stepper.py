"""SDIRK integrators written in the stage-combination ("beta") form.

Stage i solves

    M(t_i) u_i = M(t_i) sum_j beta_ij u_j + gamma*dt*(f(t_i) - K(t_i) u_i + B(t_i) u_i)

with u_0 the initial value and t_i = sum_j beta_ij t_j + gamma*dt. Only the
mass matrix at the current stage time appears, so a mass matrix that
changes from stage to stage needs no special treatment.
"""
from dataclasses import dataclass
from fractions import Fraction as F
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .errors import NonConstantDiagonal, NotStifflyAccurate, UnknownTableau
from .fem import apply_dirichlet, solve


@dataclass(frozen=True)
class SdirkTableau:
    stages: int
    order: int
    gamma: float
    beta: tuple  # beta[i-1] = (beta_i0, ..., beta_i,i-1)
    name: str = ""

    def stage_times(self, t0, dt):
        times = [t0]
        for row in self.beta:
            times.append(sum(b * tj for b, tj in zip(row, times)) + self.gamma * dt)
        return times[1:]


def tableau_from_butcher(A, b=None, c=None, order=None, name=""):
    """Convert a stiffly accurate SDIRK Butcher tableau to beta form."""
    A = np.asarray(A, dtype=float)
    s = A.shape[0]
    if np.any(np.triu(A, 1) != 0.0):
        raise ValueError("Butcher matrix must be lower triangular")
    diag = np.diag(A)
    gamma = diag[0]
    if gamma <= 0.0 or np.any(np.abs(diag - gamma) > 1e-15 * max(1.0, abs(gamma))):
        raise NonConstantDiagonal(f"diagonal entries {diag} are not a common positive value")
    if b is not None and np.any(np.abs(np.asarray(b, dtype=float) - A[-1]) > 1e-15):
        raise NotStifflyAccurate("weights b must equal the last row of A")
    astar = gamma * np.linalg.inv(A)
    beta = []
    for i in range(s):
        row = [float(np.sum(astar[i, : i + 1]))]
        row += [(1.0 if i == j else 0.0) - astar[i, j] for j in range(i)]
        beta.append(tuple(row))
    return SdirkTableau(s, order or s, float(gamma), tuple(beta), name)


_SQ2 = np.sqrt(2.0)
_G3 = 0.43586652150845899942


def _sdirk2():
    return SdirkTableau(2, 2, 1.0 - _SQ2 / 2.0, ((1.0,), (-_SQ2, 1.0 + _SQ2)), "sdirk2")


def _sdirk3():
    beta = ((1.0,),
            (0.352859819860479140, 0.647140180139520860),
            (-1.25097989505606042, 3.72932966244456977, -1.47834976738850935))
    return SdirkTableau(3, 3, _G3, beta, "sdirk3")


def _sdirk4():
    rows = ((1,),
            (-1, 2),
            (F(-13, 25), F(42, 25), F(-4, 25)),
            (F(-4, 17), F(89, 68), F(-25, 136), F(15, 136)),
            (F(7, 3), F(-37, 12), F(-103, 24), F(275, 8), F(-85, 3)))
    beta = tuple(tuple(float(v) for v in r) for r in rows)
    return SdirkTableau(5, 4, 0.25, beta, "sdirk4")


_BUILTIN = {"sdirk2": _sdirk2, "sdirk3": _sdirk3, "sdirk4": _sdirk4}


def builtin_tableau(name: str) -> SdirkTableau:
    try:
        return _BUILTIN[name]()
    except KeyError:
        raise UnknownTableau(f"unknown tableau {name!r}; choose from {sorted(_BUILTIN)}") from None


def butcher_arrays(name):
    """Standard Butcher (A, b, c) of the built-in schemes, for cross-checks."""
    if name == "sdirk2":
        g = 1.0 - _SQ2 / 2.0
        A = [[g, 0.0], [1.0 - g, g]]
    elif name == "sdirk3":
        g = _G3
        b1 = -(6 * g * g - 16 * g + 1) / 4.0
        b2 = (6 * g * g - 20 * g + 5) / 4.0
        A = [[g, 0.0, 0.0], [(1.0 - g) / 2.0, g, 0.0], [b1, b2, g]]
    elif name == "sdirk4":
        A = [[F(1, 4), 0, 0, 0, 0],
             [F(1, 2), F(1, 4), 0, 0, 0],
             [F(17, 50), F(-1, 25), F(1, 4), 0, 0],
             [F(371, 1360), F(-137, 2720), F(15, 544), F(1, 4), 0],
             [F(25, 24), F(-49, 48), F(125, 16), F(-85, 12), F(1, 4)]]
    else:
        raise UnknownTableau(name)
    A = np.array([[float(v) for v in row] for row in A])
    return A, A[-1].copy(), A.sum(axis=1)


@dataclass
class StageSystem:
    """Semi-discrete operators at one stage time.

    ``constrained`` lists DOF indices replaced by identity rows and
    ``constrained_values`` their prescribed values (zero if None).
    """

    M: sp.spmatrix
    K: sp.spmatrix
    B: sp.spmatrix
    f: np.ndarray
    constrained: np.ndarray
    constrained_values: Optional[np.ndarray] = None


@dataclass
class StageContext:
    index: int
    time: float
    combination: np.ndarray
    effective_step: float


def sdirk_step(tableau: SdirkTableau, dt: float, t_ref: float, u0: np.ndarray,
               system: Callable[[float], StageSystem], on_stage: Optional[Callable] = None):
    """Advance u0 from t_ref by dt; ``system(t)`` supplies operators at time t."""
    us = [np.asarray(u0, dtype=float)]
    times = [t_ref]
    gdt = tableau.gamma * dt
    for i, row in enumerate(tableau.beta, start=1):
        ti = sum(b * tj for b, tj in zip(row, times)) + gdt
        ustar = sum(b * uj for b, uj in zip(row, us))
        S = system(ti)
        A = (S.M + gdt * (S.K - S.B)).tocsr()
        rhs = S.M @ ustar + gdt * S.f
        A, rhs = apply_dirichlet(A, rhs, S.constrained, S.constrained_values)
        ui = solve(A, rhs)
        if on_stage is not None:
            on_stage(StageContext(i, ti, ustar, gdt), ui)
        us.append(ui)
        times.append(ti)
    return us[-1]


def sdirk_solve_linear(tableau, M, L, u0, t0, dt, nsteps, forcing=None):
    """Integrate M u' = L u + g(t) with fixed matrices; returns final u."""
    M = sp.csr_matrix(M)
    L = sp.csr_matrix(L)
    n = M.shape[0]
    zero = np.zeros(n)
    empty = np.zeros(0, dtype=int)

    def system(t):
        g = forcing(t) if forcing is not None else zero
        return StageSystem(M, -L, sp.csr_matrix((n, n)), g, empty)

    u = np.asarray(u0, dtype=float)
    t = t0
    for _ in range(nsteps):
        u = sdirk_step(tableau, dt, t, u, system)
        t += dt
    return u
