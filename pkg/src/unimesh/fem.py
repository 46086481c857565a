"""Lagrange elements on triangles, quadrature, isoparametric assembly and solves.

DOFs are numbered once over the whole background mesh: vertices first, then
p-1 nodes per edge (ordered from the lower to the higher vertex index), then
interior nodes per triangle. The numbering never changes during a run; the
active set of each interval selects which DOFs carry unknowns.
"""
import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
from scipy.special import roots_jacobi, roots_legendre
from scipy.sparse.linalg import splu

from .errors import InvalidElement, SingularJacobian, SingularMatrix

log = logging.getLogger(__name__)


@lru_cache(maxsize=None)
def _triangle_rule(degree):
    # Collapsed (Duffy) tensor rule: Gauss-Legendre in xi, Gauss-Jacobi(1,0)
    # in eta absorbs the (1 - eta) Jacobian. Exact for total degree <= degree.
    n = max(1, (degree + 2) // 2)
    s, ws = roots_legendre(n)
    r, wr = roots_jacobi(n, 1.0, 0.0)
    xi = 0.5 * (1.0 + s)
    eta = 0.5 * (1.0 + r)
    X = np.outer(1.0 - eta, xi)
    Y = np.repeat(eta[:, None], n, axis=1)
    W = np.outer(0.25 * wr, 0.5 * ws)
    pts = np.stack([X.ravel(), Y.ravel()], axis=-1)
    return pts, W.ravel()


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray
    weights: np.ndarray
    degree: int


def triangle_quadrature(degree: int) -> QuadratureRule:
    """Rule on the reference triangle (0,0),(1,0),(0,1); weights sum to 1/2."""
    pts, w = _triangle_rule(int(degree))
    return QuadratureRule(pts, w, int(degree))


def gauss_line(degree: int):
    """Gauss-Legendre rule on [0, 1] exact to the given degree."""
    n = max(1, (degree + 2) // 2)
    s, w = roots_legendre(n)
    return 0.5 * (1.0 + s), 0.5 * w


def lattice_nodes(p):
    """Equispaced nodes: vertices, then edges 0,1,2 (each in local direction), then interior."""
    V = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    nodes = [V[0], V[1], V[2]]
    for a, b in ((1, 2), (2, 0), (0, 1)):
        for k in range(1, p):
            nodes.append(V[a] + (k / p) * (V[b] - V[a]))
    for j in range(1, p):
        for i in range(1, p - j):
            nodes.append(np.array([i / p, j / p]))
    return np.array(nodes)


class ReferenceElement:
    """Lagrange element of degree p on the reference triangle."""

    def __init__(self, degree: int):
        if degree < 1:
            raise ValueError("degree must be at least 1")
        self.degree = p = int(degree)
        self.nodes = lattice_nodes(p)
        self.n_nodes = len(self.nodes)
        self.exponents = [(i, j) for j in range(p + 1) for i in range(p + 1 - j)]
        V = self._monomials(self.nodes)
        self._coef = np.linalg.solve(V, np.eye(self.n_nodes))
        self.n_interior = (p - 1) * (p - 2) // 2

    def _monomials(self, x):
        x = np.atleast_2d(x)
        return np.stack([x[:, 0] ** i * x[:, 1] ** j for i, j in self.exponents], axis=-1)

    def _monomial_grads(self, x):
        x = np.atleast_2d(x)
        X, Y = x[:, 0], x[:, 1]
        dx = [i * X ** max(i - 1, 0) * Y ** j for i, j in self.exponents]
        dy = [j * X ** i * Y ** max(j - 1, 0) for i, j in self.exponents]
        return np.stack([np.stack(dx, -1), np.stack(dy, -1)], axis=-1)

    def values(self, x):
        """Shape function values, shape (n_points, n_nodes)."""
        return self._monomials(x) @ self._coef

    def grads(self, x):
        """Reference gradients, shape (n_points, n_nodes, 2)."""
        return np.einsum("qmd,ma->qad", self._monomial_grads(x), self._coef)


@lru_cache(maxsize=None)
def reference_element(degree):
    return ReferenceElement(degree)


class FeSpace:
    """Continuous Lagrange space of a given degree over a background mesh."""

    def __init__(self, mesh, degree: int):
        self.mesh = mesh
        self.degree = p = int(degree)
        self.ref = reference_element(p)
        nv, ne, nt = mesh.n_vertices, len(mesh.edges), mesh.n_triangles
        self.n_edge = p - 1
        self.n_face = self.ref.n_interior
        self.ndofs = nv + ne * self.n_edge + nt * self.n_face
        tri = mesh.triangles
        cols = [tri[:, 0], tri[:, 1], tri[:, 2]]
        for j, (a, b) in enumerate(((1, 2), (2, 0), (0, 1))):
            e = mesh.tri_edges[:, j]
            forward = tri[:, a] < tri[:, b]
            for k in range(self.n_edge):
                kk = np.where(forward, k, self.n_edge - 1 - k)
                cols.append(nv + e * self.n_edge + kk)
        for k in range(self.n_face):
            cols.append(nv + ne * self.n_edge + np.arange(nt) * self.n_face + k)
        self.cell_dofs = np.stack(cols, axis=1).astype(np.int64)
        # straight (background) DOF positions
        lam = barycentric_of_reference(self.ref.nodes)
        P = mesh.vertices[tri]
        pos = np.einsum("kj,tjd->tkd", lam, P)
        self.dof_coords = np.empty((self.ndofs, 2))
        self.dof_coords[self.cell_dofs.ravel()] = pos.reshape(-1, 2)

    def element_dofs(self, elements):
        return self.cell_dofs[np.asarray(elements)]

    def dofs_of(self, elements):
        return np.unique(self.cell_dofs[np.asarray(elements)])

    def edge_dofs(self, edge_ids):
        """All DOFs lying on the given mesh edges, endpoints included."""
        edge_ids = np.asarray(edge_ids, dtype=np.int64)
        nv = self.mesh.n_vertices
        out = [self.mesh.edges[edge_ids].ravel()]
        for k in range(self.n_edge):
            out.append(nv + edge_ids * self.n_edge + k)
        return np.unique(np.concatenate(out)) if len(edge_ids) else np.zeros(0, dtype=np.int64)


def barycentric_of_reference(xi):
    xi = np.atleast_2d(xi)
    return np.stack([1.0 - xi[:, 0] - xi[:, 1], xi[:, 0], xi[:, 1]], axis=-1)


@dataclass
class GeometryAtPoints:
    x: np.ndarray       # (nE, nq, 2) physical points
    detJ: np.ndarray    # (nE, nq)
    Jinv: np.ndarray    # (nE, nq, 2, 2)
    velocity: Optional[np.ndarray]  # (nE, nq, 2) mesh velocity or None


def geometry_at(config, elements, xi, with_velocity=False) -> GeometryAtPoints:
    """Isoparametric map data of ``elements`` at reference points ``xi``."""
    gspace = config.space
    ref = gspace.ref
    dofs = gspace.cell_dofs[elements]
    Y = config.positions[dofs]                       # (nE, ng, 2)
    G = ref.values(xi)                               # (nq, ng)
    dG = ref.grads(xi)                               # (nq, ng, 2)
    x = np.einsum("qa,eai->eqi", G, Y, optimize=True)
    J = np.einsum("eai,qaj->eqij", Y, dG, optimize=True)
    det = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    Jinv = np.empty_like(J)
    safe = np.where(det == 0.0, 1.0, det)
    Jinv[..., 0, 0] = J[..., 1, 1] / safe
    Jinv[..., 1, 1] = J[..., 0, 0] / safe
    Jinv[..., 0, 1] = -J[..., 0, 1] / safe
    Jinv[..., 1, 0] = -J[..., 1, 0] / safe
    vel = None
    if with_velocity and config.velocities is not None:
        vel = np.einsum("qa,eai->eqi", G, config.velocities[dofs], optimize=True)
    return GeometryAtPoints(x, det, Jinv, vel)


@dataclass
class Coefficients:
    """Operator a(u) = -div(k1 grad u) + k2 . grad u + k3 u with constant data."""

    k1: np.ndarray = None
    k2: np.ndarray = None
    k3: float = 0.0

    def __post_init__(self):
        k1 = np.eye(2) if self.k1 is None else np.asarray(self.k1, dtype=float)
        self.k1 = k1 * np.eye(2) if k1.ndim == 0 else k1
        self.k2 = np.zeros(2) if self.k2 is None else np.asarray(self.k2, dtype=float)
        self.k3 = float(self.k3)


@dataclass
class SparseSystem:
    M: sp.csr_matrix
    K: sp.csr_matrix
    B: sp.csr_matrix
    f: np.ndarray


def assembly_degree(p, pg):
    return max(2 * p, 2 * pg) + 2


def assemble(space: FeSpace, config, coeffs: Optional[Coefficients] = None,
             forcing: Optional[Callable] = None, t: float = 0.0, elements=None,
             quad_degree: Optional[int] = None) -> SparseSystem:
    """Mass, stiffness, advection matrices and load vector over ``elements``.

    ``config`` provides ``space`` (geometry space), ``positions`` and
    ``velocities`` of the geometric DOFs, and ``elements`` (used when the
    argument is None). Matrices are sized by the full DOF numbering.
    """
    coeffs = coeffs or Coefficients()
    elements = np.asarray(config.elements if elements is None else elements, dtype=np.int64)
    n = space.ndofs
    qd = quad_degree or assembly_degree(space.degree, config.space.degree)
    rule = triangle_quadrature(qd)
    geo = geometry_at(config, elements, rule.points, with_velocity=True)
    if np.any(geo.detJ <= 0.0):
        bad = np.unique(elements[np.any(geo.detJ <= 0.0, axis=1)])
        raise SingularJacobian(f"nonpositive Jacobian on {len(bad)} element(s), e.g. {bad[:5]}")
    N = space.ref.values(rule.points)                 # (nq, nl)
    dN = space.ref.grads(rule.points)                 # (nq, nl, 2)
    g = np.einsum("qaj,eqji->eqai", dN, geo.Jinv, optimize=True)   # physical gradients
    wd = geo.detJ * rule.weights[None, :]             # (nE, nq)
    ne, nq, nl = g.shape[0], g.shape[1], g.shape[2]

    wN = wd[:, :, None] * N[None]                     # (nE, nq, nl)
    Me = np.matmul(wN.transpose(0, 2, 1), N)
    # sum over (q, i) of (w g_ai) (k1 g_b)_i as one batched product
    wg = (wd[:, :, None, None] * g).transpose(0, 2, 1, 3).reshape(ne, nl, 2 * nq)
    kg = (g @ coeffs.k1.T).transpose(0, 2, 1, 3).reshape(ne, nl, 2 * nq)
    Ke = np.matmul(wg, kg.transpose(0, 2, 1))
    if np.any(coeffs.k2 != 0.0):
        Ke += np.matmul(wN.transpose(0, 2, 1), g @ coeffs.k2)
    if coeffs.k3 != 0.0:
        Ke += coeffs.k3 * Me
    if geo.velocity is not None:
        vg = np.einsum("eqi,eqbi->eqb", geo.velocity, g, optimize=True)
        Be = np.matmul(wN.transpose(0, 2, 1), vg)
    else:
        Be = np.zeros_like(Me)
    fe = np.zeros((len(elements), N.shape[1]))
    if forcing is not None:
        fq = np.asarray(forcing(geo.x, t), dtype=float)
        fe = np.einsum("eqa,eq->ea", wN, fq, optimize=True)

    dofs = space.cell_dofs[elements]
    rows = np.repeat(dofs[:, :, None], dofs.shape[1], axis=2).ravel()
    cols = np.repeat(dofs[:, None, :], dofs.shape[1], axis=1).ravel()

    def build(vals):
        return sp.csr_matrix((vals.ravel(), (rows, cols)), shape=(n, n))

    f = np.bincount(dofs.ravel(), weights=fe.ravel(), minlength=n)
    return SparseSystem(build(Me), build(Ke), build(Be), f)


def apply_dirichlet(A, b, rows, values=None):
    """Replace the given rows by identity rows and set b there to ``values`` (default 0)."""
    rows = np.asarray(rows, dtype=np.int64)
    A = sp.csr_matrix(A)
    b = np.array(b, dtype=float)
    if len(rows) == 0:
        return A, b
    mask = np.zeros(A.shape[0])
    mask[rows] = 1.0
    A = (sp.diags(1.0 - mask) @ A + sp.diags(mask)).tocsr()
    b[rows] = 0.0 if values is None else values
    return A, b


def solve(A, b, rtol=1e-12):
    """Sparse LU solve with up to two steps of iterative refinement."""
    b = np.asarray(b, dtype=float)
    nb = np.linalg.norm(b)
    if nb == 0.0:
        return np.zeros_like(b)
    A = sp.csc_matrix(A)
    try:
        lu = splu(A)
    except RuntimeError as exc:
        raise SingularMatrix(str(exc)) from exc
    x = lu.solve(b)
    if not np.all(np.isfinite(x)):
        raise SingularMatrix("LU solve produced non-finite values")
    for _ in range(2):
        r = b - A @ x
        if np.linalg.norm(r) <= rtol * nb:
            break
        x = x + lu.solve(r)
    else:
        r = b - A @ x
        if np.linalg.norm(r) > rtol * nb:
            log.warning("solve residual %.3e exceeds %.1e relative", np.linalg.norm(r) / nb, rtol)
    return x


def evaluate_field(space, config, u, elements, xi):
    """u_h at reference points xi (nE, nq, 2) or shared (nq, 2) of given elements."""
    elements = np.asarray(elements)
    if xi.ndim == 2:
        N = space.ref.values(xi)
        return np.einsum("qa,ea->eq", N, u[space.cell_dofs[elements]])
    N = space.ref.values(xi.reshape(-1, 2)).reshape(xi.shape[0], xi.shape[1], -1)
    return np.einsum("eqa,ea->eq", N, u[space.cell_dofs[elements]])


def l2_error(space, config, u, exact, t, elements=None, quad_degree=None):
    """L2 norm of u_h - exact(., t) over the deformed elements."""
    elements = np.asarray(config.elements if elements is None else elements, dtype=np.int64)
    qd = quad_degree or 2 * max(space.degree, config.space.degree) + 4
    rule = triangle_quadrature(qd)
    geo = geometry_at(config, elements, rule.points)
    uh = evaluate_field(space, config, np.asarray(u, dtype=float), elements, rule.points)
    ue = exact(geo.x, t)
    return float(np.sqrt(np.sum(geo.detJ * rule.weights[None, :] * (uh - ue) ** 2)))


def l2_norm(space, config, u, elements=None, quad_degree=None):
    return l2_error(space, config, u, lambda x, t: np.zeros(x.shape[:-1]), 0.0, elements, quad_degree)


def dump_coo(path, A):
    """Write a sparse matrix as ``row col value`` lines (0-based)."""
    C = sp.coo_matrix(A)
    with open(path, "w", newline="\n") as fh:
        for r, c, v in zip(C.row, C.col, C.data):
            fh.write(f"{r} {c} {v:.17g}\n")


def check_jacobians(config, elements=None, quad_degree=None):
    """Minimum isoparametric Jacobian determinant over quadrature points and nodes."""
    elements = np.asarray(config.elements if elements is None else elements, dtype=np.int64)
    p = config.space.degree
    rule = triangle_quadrature(quad_degree or 2 * p + 2)
    pts = np.vstack([rule.points, config.space.ref.nodes])
    geo = geometry_at(config, elements, pts)
    return float(geo.detJ.min())


def require_valid(config, elements=None):
    m = check_jacobians(config, elements)
    if m <= 0.0:
        raise InvalidElement(f"isoparametric Jacobian {m:.3e} <= 0; the time step is too large "
                             "for the mesh spacing")
    return m
