"""One-dimensional universal mesh on a uniform grid with P1 elements.

The domain is (0, s(t)). During an interval with reference time t_ref the
node X_i with X_{i-1} < s(t_ref) <= X_i follows s(t). When s(t_ref) lies
just beyond the last node (by less than the grid spacing), that last node
keeps tracking the boundary. Nodes in
[s(t_ref) - R h, s(t_ref)) are relaxed to the left and stay put, all other
nodes keep their background positions.
"""
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import IntervalConditionViolated
from .fem import apply_dirichlet, gauss_line, solve
from .universal_mesh import relax_1d

_QX, _QW = gauss_line(9)


@dataclass
class Grid1d:
    X: np.ndarray

    @property
    def h(self):
        return float(np.max(np.diff(self.X)))

    @property
    def min_spacing(self):
        return float(np.min(np.diff(self.X)))


def uniform_grid(h, length=1.0):
    m = int(round(length / h))
    return Grid1d(np.linspace(0.0, length, m + 1))


class IntervalMap1d:
    """Node trajectories for t in (t_ref, t_ref + dt]."""

    def __init__(self, grid: Grid1d, s, ds, t_ref, delta=0.3, R=3):
        self.grid, self.s, self.ds, self.t_ref = grid, s, ds, float(t_ref)
        X = grid.X
        self.s_ref = s_ref = float(s(t_ref))
        idx = int(np.searchsorted(X, s_ref, side="left"))
        if idx == len(X) and s_ref - X[-1] < grid.min_spacing:
            # boundary just past the last node: that node keeps tracking it
            idx = len(X) - 1
        if idx == 0 or idx >= len(X):
            raise IntervalConditionViolated(f"boundary s={s_ref} is outside the background grid")
        self.snap = idx
        self.base = relax_1d(X, s_ref, grid.h, delta, R)
        self.base[idx:] = X[idx:]

    def nodes(self, t):
        x = self.base.copy()
        x[self.snap] = self.s(t)
        return x

    def velocities(self, t):
        v = np.zeros_like(self.base)
        v[self.snap] = self.ds(t)
        return v

    def check(self, t):
        motion = abs(self.s(t) - self.s_ref)
        if motion >= self.grid.min_spacing:
            raise IntervalConditionViolated(
                f"|s(t) - s(t_ref)| = {motion:.3e} exceeds the minimum grid spacing")
        x = self.nodes(t)[: self.snap + 1]
        if np.any(np.diff(x) <= 0.0):
            raise IntervalConditionViolated("node ordering lost within the interval")

    @property
    def n_active_elements(self):
        return self.snap

    def inactive(self):
        """Constrained nodes: x=0, the tracking node and everything beyond it."""
        n = len(self.base)
        return np.concatenate([[0], np.arange(self.snap, n)])


def assemble_1d(x, v, n_elem, forcing=None, t=0.0):
    """P1 mass, stiffness, advection matrices and load on the first n_elem cells."""
    n = len(x)
    a, b = x[:n_elem], x[1:n_elem + 1]
    L = b - a
    va, vb = v[:n_elem], v[1:n_elem + 1]
    q = _QX[None, :]
    N = np.stack([1.0 - q, q], axis=1)                     # (1, 2, nq) on the unit cell
    N = np.broadcast_to(N, (n_elem, 2, len(_QX)))
    dN = np.stack([-1.0 / L, 1.0 / L], axis=1)             # (ne, 2)
    w = _QW[None, :] * L[:, None]                          # (ne, nq)
    vq = va[:, None] * (1.0 - q) + vb[:, None] * q
    Me = np.einsum("eq,eaq,ebq->eab", w, N, N)
    Ke = np.einsum("eq,ea,eb->eab", w, dN, dN)
    Be = np.einsum("eq,eaq,eq,eb->eab", w, N, vq, dN)
    rows = np.stack([np.arange(n_elem), np.arange(1, n_elem + 1)], axis=1)
    R = np.repeat(rows[:, :, None], 2, axis=2).ravel()
    C = np.repeat(rows[:, None, :], 2, axis=1).ravel()

    def build(E):
        return sp.csr_matrix((E.ravel(), (R, C)), shape=(n, n))

    f = np.zeros(n)
    if forcing is not None:
        xq = a[:, None] + L[:, None] * q
        fe = np.einsum("eq,eq,eaq->ea", w, forcing(xq, t), N)
        f = np.bincount(rows.ravel(), weights=fe.ravel(), minlength=n)
    return build(Me), build(Ke), build(Be), f


def p1_eval(x_nodes, u, pts):
    """Piecewise-linear field, zero beyond the last node."""
    pts = np.asarray(pts, dtype=float)
    out = np.interp(pts, x_nodes, u, left=0.0, right=0.0)
    return out


def l2_project_1d(x_new, n_elem, constraint_rows, constraint_vals, func, breaks=()):
    """L2 projection of func onto P1 over cells [x_new[k], x_new[k+1]], k < n_elem.

    Integration follows the union of cell boundaries and ``breaks`` (kinks
    of func), so piecewise-polynomial data is integrated exactly.
    """
    n = len(x_new)
    edges = np.unique(np.concatenate([x_new[: n_elem + 1], np.asarray(breaks, dtype=float)]))
    edges = edges[(edges >= x_new[0]) & (edges <= x_new[n_elem])]
    a, b = edges[:-1], edges[1:]
    xq = (a[:, None] + (b - a)[:, None] * _QX[None, :]).ravel()
    wq = ((b - a)[:, None] * _QW[None, :]).ravel()
    cell = np.clip(np.searchsorted(x_new, xq, side="right") - 1, 0, n_elem - 1)
    xl, xr = x_new[cell], x_new[cell + 1]
    t = (xq - xl) / (xr - xl)
    phi = np.stack([1.0 - t, t], axis=1)
    idx = np.stack([cell, cell + 1], axis=1)
    fq = func(xq)
    r = np.bincount(idx.ravel(), weights=(wq[:, None] * fq[:, None] * phi).ravel(), minlength=n)
    data = (wq[:, None, None] * phi[:, :, None] * phi[:, None, :]).ravel()
    R = np.repeat(idx[:, :, None], 2, axis=2).ravel()
    C = np.repeat(idx[:, None, :], 2, axis=1).ravel()
    M = sp.csr_matrix((data, (R, C)), shape=(n, n))
    A, rhs = apply_dirichlet(M, r, constraint_rows, constraint_vals)
    return solve(A, rhs)


def l2_diff_1d(x_nodes, n_elem, f, g, breaks=()):
    """sqrt(int_0^{x[n_elem]} (f - g)^2) with breakpoints following the cells and ``breaks``."""
    edges = np.unique(np.concatenate([x_nodes[: n_elem + 1], np.asarray(breaks, dtype=float)]))
    edges = edges[(edges >= x_nodes[0]) & (edges <= x_nodes[n_elem])]
    a, b = edges[:-1], edges[1:]
    xq = (a[:, None] + (b - a)[:, None] * _QX[None, :]).ravel()
    wq = ((b - a)[:, None] * _QW[None, :]).ravel()
    return float(np.sqrt(np.sum(wq * (f(xq) - g(xq)) ** 2)))
