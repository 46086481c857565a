"""Triangle classification, submesh extraction and the universal mesh map.

For an interval (t_ref, t_ref + dt] the submesh consists of the background
triangles with at least one vertex inside the domain at t_ref. Vertices
inside and within R*h of the boundary are relaxed inward; triangles with
vertices outside are curved onto the boundary through gamma, the closest
point projection at t composed with the one at t_ref.

The map of a point with barycentric coordinates (lu, lv, lw) is

* affine in the relaxed vertices on triangles with no outside vertex,
* lu*gamma(u) + lv*p(v) + lw*p(w) when only u is outside,
* the blend psi when only w is inside (p = relaxation).

Since each formula is linear in the gamma values, it is stored as sparse
coefficient matrices acting on the projected points and relaxed vertices;
only the projections at time t are recomputed per stage.
"""
import logging
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .errors import (EmptySubmesh, IntervalConditionViolated, InvalidElement,
                     MeshMapDiscontinuity, PointNotInSubmesh, VertexOnBoundary)
from .fem import FeSpace, barycentric_of_reference, check_jacobians
from .geometry import banded_projection, closest_point, projection_velocity
from .mesh import triangle_angles

log = logging.getLogger(__name__)

T0, T1, T2, T3 = 0, 1, 2, 3
_TOUCH = 1e-13


@dataclass
class TriangleClassification:
    t: float
    cls: np.ndarray            # (nt,) number of vertices with phi >= 0
    order: np.ndarray          # (nt, 3) local vertex indices as (u, v, w)
    phi: np.ndarray            # (nv,) signed distance of the vertices
    normal: np.ndarray         # (nv, 2) outward normal at the projection
    mesh: object = None

    def count(self, k):
        return int(np.count_nonzero(self.cls == k))


def classify(mesh, curve, t, projection=None) -> TriangleClassification:
    """Class of every triangle = number of its vertices not strictly inside."""
    res = projection if projection is not None else closest_point(curve, mesh.vertices, t, strict=False)
    phi = np.asarray(res.signed_distance)
    touching = np.abs(phi) <= _TOUCH
    if np.any(touching):
        raise VertexOnBoundary(f"{np.count_nonzero(touching)} vertex(es) lie on the boundary at t={t!r}; "
                               "perturb t or the mesh")
    outside = phi >= 0.0
    out_tri = outside[mesh.triangles]
    cls = out_tri.sum(axis=1)
    order = np.tile(np.arange(3), (mesh.n_triangles, 1))
    # one outside vertex: it becomes u; one inside vertex: it becomes w
    for j in range(3):
        t1 = (cls == 1) & out_tri[:, j]
        order[t1] = [j, (j + 1) % 3, (j + 2) % 3]
        t2 = (cls == 2) & ~out_tri[:, j]
        order[t2] = [(j + 1) % 3, (j + 2) % 3, j]
    return TriangleClassification(float(t), cls, order, phi, np.asarray(res.normal), mesh)


@dataclass
class Submesh:
    mesh: object
    classification: TriangleClassification
    elements: np.ndarray
    boundary_edges: np.ndarray
    t_ref: float

    def area(self):
        P = self.mesh.vertices[self.mesh.triangles[self.elements]]
        return float(0.5 * np.sum((P[:, 1, 0] - P[:, 0, 0]) * (P[:, 2, 1] - P[:, 0, 1])
                                  - (P[:, 1, 1] - P[:, 0, 1]) * (P[:, 2, 0] - P[:, 0, 0])))


def extract_submesh(classification: TriangleClassification, mesh=None) -> Submesh:
    mesh = mesh or classification.mesh
    keep = classification.cls <= T2
    elements = np.flatnonzero(keep)
    if len(elements) == 0:
        raise EmptySubmesh("no triangle has a vertex inside the domain")
    et = mesh.edge_triangles
    inside = np.zeros(len(et), dtype=int)
    for k in range(2):
        valid = et[:, k] >= 0
        inside[valid] += keep[et[valid, k]]
    boundary = np.flatnonzero(inside == 1)
    return Submesh(mesh, classification, elements, boundary, classification.t)


def relax(mesh, curve, t_ref, delta, R, x, h=None):
    """Relaxation p(x): pull points inside and within R*h of the boundary inward."""
    h = mesh.h if h is None else h
    x = np.asarray(x, dtype=float)
    res = closest_point(curve, x, t_ref, strict=False)
    return _relax_with(x, res.signed_distance, res.normal, h, delta, R)


def _relax_with(x, phi, normal, h, delta, R):
    phi = np.asarray(phi)
    band = (phi < 0.0) & (phi > -R * h)
    factor = np.where(band, delta * h * (1.0 + phi / (R * h)), 0.0)
    return x - factor[..., None] * normal


def relax_1d(X, s_ref, h, delta, R):
    """One-dimensional relaxation of nodes X left of the boundary point s_ref."""
    X = np.asarray(X, dtype=float)
    band = (X >= s_ref - R * h) & (X < s_ref)
    return np.where(band, X - delta * h * (1.0 - (s_ref - X) / (R * h)), X)


def check_delta(delta, R):
    lo = 1.0 / (1.0 + 1.0 / R)
    if not 0.0 < delta <= 1.0:
        raise ValueError(f"delta must lie in (0, 1], got {delta}")
    if delta < lo:
        warnings.warn(f"delta={delta} is below (1+1/R)^-1={lo:.3f}; element quality bounds may not hold",
                      stacklevel=2)


def blend_weights(lam):
    """Coefficients of psi for barycentric rows (lu, lv, lw).

    Returns (cA, cu, cB, cv, cw): psi = cA g(A) + cu g(u) + cB g(B) + cv g(v)
    + cw w with A = lu u + (1-lu) v and B = (1-lv) u + lv v. At lu = 1 (or
    lv = 1) the bounded limit is used.
    """
    lu, lv, lw = lam[..., 0], lam[..., 1], lam[..., 2]
    du = 1.0 - lu
    dv = 1.0 - lv
    su = du > 1e-14
    sv = dv > 1e-14
    iu = np.where(su, 0.5 / np.where(su, du, 1.0), 0.0)
    iv = np.where(sv, 0.5 / np.where(sv, dv, 1.0), 0.0)
    cA = np.where(su, lv * iu, 0.0)
    cu = np.where(su, lu * lw * iu, 0.5)
    cB = np.where(sv, lu * iv, 0.0)
    cv = np.where(sv, lv * lw * iv, 0.5)
    return cA, cu, cB, cv, lw


def blend(curve, t_ref, t, u, v, w, lam):
    """psi at barycentric coordinates ``lam`` of the straight triangle (u, v, w)."""
    lam = np.atleast_2d(lam)
    u, v, w = (np.asarray(z, dtype=float) for z in (u, v, w))
    A = lam[:, :1] * u + (1.0 - lam[:, :1]) * v
    B = (1.0 - lam[:, 1:2]) * u + lam[:, 1:2] * v
    pts = np.vstack([A, B, u[None], v[None]])
    base = closest_point(curve, pts, t_ref).point
    g = closest_point(curve, base, t).point
    n = len(lam)
    cA, cu, cB, cv, cw = blend_weights(lam)
    return (cA[:, None] * g[:n] + cB[:, None] * g[n:2 * n] + cu[:, None] * g[2 * n]
            + cv[:, None] * g[2 * n + 1] + cw[:, None] * w)


@dataclass
class DeformedConfiguration:
    space: FeSpace            # geometry space
    positions: np.ndarray     # (ndofs, 2) y_a(t)
    velocities: np.ndarray    # (ndofs, 2) dy_a/dt
    elements: np.ndarray
    t: float
    t_ref: float


def identity_configuration(space, elements=None, t=0.0):
    elements = np.arange(space.mesh.n_triangles) if elements is None else np.asarray(elements)
    return DeformedConfiguration(space, space.dof_coords.copy(), np.zeros_like(space.dof_coords),
                                 elements, t, t)


@dataclass
class ActiveSet:
    active: np.ndarray
    inactive: np.ndarray
    mask: np.ndarray


def active_set(space: FeSpace, submesh: Submesh) -> ActiveSet:
    """Active DOFs: those of submesh triangles not lying on the submesh boundary."""
    mask = np.zeros(space.ndofs, dtype=bool)
    mask[space.dofs_of(submesh.elements)] = True
    mask[space.edge_dofs(submesh.boundary_edges)] = False
    return ActiveSet(np.flatnonzero(mask), np.flatnonzero(~mask), mask)


@dataclass
class _Plan:
    base: np.ndarray          # (nG, 2) projections at t_ref of the gamma points
    theta: np.ndarray         # (nG,) their curve parameters
    Cg: sp.csr_matrix         # rows x nG
    Cp: sp.csr_matrix         # rows x nv (relaxed vertices)


class IntervalMap:
    """Universal mesh map for one interval with reference time t_ref."""

    def __init__(self, mesh, curve, t_ref, delta=0.8, R=3, geom_degree=1, geom_space=None,
                 classification=None, check_continuity=True):
        check_delta(delta, R)
        self.mesh, self.curve, self.t_ref = mesh, curve, float(t_ref)
        self.delta, self.R = delta, R
        self.space = geom_space or FeSpace(mesh, geom_degree)
        self.check_continuity = check_continuity
        # vertex data is only needed exactly inside the relaxation strip
        res = banded_projection(curve, mesh.vertices, t_ref, band=(R + 1) * mesh.h)
        self.classification = classification or classify(mesh, curve, t_ref, projection=res)
        self.submesh = extract_submesh(self.classification, mesh)
        c = self.classification
        self.relaxed = _relax_with(mesh.vertices, c.phi, c.normal, mesh.h, delta, R)
        self.relaxed[c.phi >= 0.0] = mesh.vertices[c.phi >= 0.0]
        els = self.submesh.elements
        lam = barycentric_of_reference(self.space.ref.nodes)
        nloc = len(lam)
        self._dof_elems = np.repeat(els, nloc)
        self._dof_lam = np.tile(lam, (len(els), 1))
        self._plan = self._build_plan(self._dof_elems, self._dof_lam)
        self._dofs = self.space.cell_dofs[els].ravel()
        bv = np.unique(mesh.edges[self.submesh.boundary_edges].ravel())
        self._boundary_vertices = bv

    # -- plan construction -------------------------------------------------
    def _build_plan(self, elems, lam):
        mesh = self.mesh
        c = self.classification
        n = len(elems)
        nv = mesh.n_vertices
        order = c.order[elems]
        tri = mesh.triangles[elems]
        vid = np.take_along_axis(tri, order, axis=1)             # global (u, v, w)
        lam_uvw = np.take_along_axis(lam, order, axis=1)          # (lu, lv, lw)
        cls = c.cls[elems]
        rows_p, cols_p, vals_p = [], [], []
        gpts, rows_g, vals_g = [], [], []
        idx = np.arange(n)

        def add_p(mask, col, val):
            rows_p.append(idx[mask]); cols_p.append(col[mask]); vals_p.append(val[mask])

        def add_g(mask, pts, val):
            rows_g.append(idx[mask]); gpts.append(pts[mask]); vals_g.append(val[mask])

        X = mesh.vertices
        m0 = cls == T0
        for k in range(3):
            add_p(m0, vid[:, k], lam_uvw[:, k])
        m1 = cls == T1
        add_g(m1, X[vid[:, 0]], lam_uvw[:, 0])
        add_p(m1, vid[:, 1], lam_uvw[:, 1])
        add_p(m1, vid[:, 2], lam_uvw[:, 2])
        m2 = cls == T2
        if np.any(m2):
            cA, cu, cB, cv, cw = blend_weights(lam_uvw)
            U, V = X[vid[:, 0]], X[vid[:, 1]]
            lu, lv = lam_uvw[:, :1], lam_uvw[:, 1:2]
            A = lu * U + (1.0 - lu) * V
            B = (1.0 - lv) * U + lv * V
            add_g(m2, A, cA)
            add_g(m2, B, cB)
            add_g(m2, U, cu)
            add_g(m2, V, cv)
            add_p(m2, vid[:, 2], cw)
        if np.any(c.cls[elems] == T3):
            raise PointNotInSubmesh("element outside the submesh")
        rp, cp_, vp = (np.concatenate(a) for a in (rows_p, cols_p, vals_p))
        Cp = sp.csr_matrix((vp, (rp, cp_)), shape=(n, nv))
        if gpts:
            P = np.concatenate(gpts)
            rg = np.concatenate(rows_g)
            vg = np.concatenate(vals_g)
        else:
            P = np.zeros((0, 2)); rg = np.zeros(0, int); vg = np.zeros(0)
        # dedupe the projection points so every distinct point is projected once
        _, first, inv = np.unique(np.round(P, 14), axis=0, return_index=True, return_inverse=True)
        inv = inv.ravel()
        Pu = P[first]
        if len(Pu):
            res = banded_projection(self.curve, Pu, self.t_ref, band=np.inf)
            base, theta = res.point, res.theta
        else:
            base, theta = Pu, np.zeros(0)
        Cg = sp.csr_matrix((vg, (rg, inv)), shape=(n, len(Pu)))
        return _Plan(base.reshape(-1, 2), theta.reshape(-1), Cg, Cp)

    def _evaluate(self, plan, t, velocity=True):
        if len(plan.base):
            res = closest_point(self.curve, plan.base, t, theta0=plan.theta)
            g = res.point
            gd = projection_velocity(self.curve, plan.base, t, result=res) if velocity else None
        else:
            g = gd = np.zeros((0, 2))
        y = plan.Cg @ g + plan.Cp @ self.relaxed
        v = plan.Cg @ gd if velocity else None
        return y, v, g

    # -- public queries ----------------------------------------------------
    def configuration(self, t, max_motion=None) -> DeformedConfiguration:
        """Positions and velocities of all geometric DOFs at time t."""
        y, v, g = self._evaluate(self._plan, t)
        if max_motion is not None and len(g):
            motion = np.max(np.linalg.norm(g - self._plan.base, axis=1))
            if motion >= max_motion:
                raise IntervalConditionViolated(
                    f"boundary moved {motion:.3e} >= {max_motion:.3e} within the interval; reduce dt")
        pos = self.space.dof_coords.copy()
        vel = np.zeros_like(pos)
        pos[self._dofs] = y
        vel[self._dofs] = v
        if self.check_continuity:
            scale = 1.0 + np.max(np.abs(y))
            gap = np.max(np.abs(pos[self._dofs] - y)) if len(y) else 0.0
            if gap > 1e-10 * scale:
                raise MeshMapDiscontinuity(f"mesh map differs by {gap:.3e} across element interfaces")
        return DeformedConfiguration(self.space, pos, vel, self.submesh.elements, float(t), self.t_ref)

    def map_in_elements(self, elems, lam, t, velocity=False):
        """Phi (and optionally V) at barycentric points lam (background vertex order)."""
        plan = self._build_plan(np.asarray(elems), np.atleast_2d(lam))
        y, v, _ = self._evaluate(plan, t, velocity=velocity)
        return (y, v) if velocity else y

    def locate(self, x):
        """Submesh element and barycentric coordinates of straight points x."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        els = self.submesh.elements
        P = self.mesh.vertices[self.mesh.triangles[els]]
        e_out = np.empty(len(x), dtype=np.int64)
        lam_out = np.empty((len(x), 3))
        for s in range(0, len(x), 256):
            xs = x[s:s + 256]
            lam = _barycentric(P, xs)                      # (n, nE, 3)
            viol = np.maximum(-lam, 0.0).max(axis=-1)
            k = np.argmin(viol, axis=1)
            if np.any(viol[np.arange(len(xs)), k] > 1e-12):
                raise PointNotInSubmesh("point outside the submesh domain")
            e_out[s:s + 256] = els[k]
            lam_out[s:s + 256] = lam[np.arange(len(xs)), k]
        return e_out, lam_out

    def mesh_map(self, x, t):
        e, lam = self.locate(x)
        return self.map_in_elements(e, lam, t)

    def material_velocity(self, x, t):
        e, lam = self.locate(x)
        return self.map_in_elements(e, lam, t, velocity=True)[1]


def _barycentric(P, x):
    # P (nE, 3, 2), x (n, 2) -> (n, nE, 3)
    a, b, c = P[:, 0], P[:, 1], P[:, 2]
    det = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
    dx = x[:, None, 0] - a[None, :, 0]
    dy = x[:, None, 1] - a[None, :, 1]
    l1 = (dx * (c[:, 1] - a[:, 1]) - dy * (c[:, 0] - a[:, 0])) / det
    l2 = ((b[:, 0] - a[:, 0]) * dy - (b[:, 1] - a[:, 1]) * dx) / det
    return np.stack([1.0 - l1 - l2, l1, l2], axis=-1)


def mesh_map(interval: IntervalMap, x, t):
    return interval.mesh_map(x, t)


def material_velocity_exact(interval: IntervalMap, x, t):
    return interval.material_velocity(x, t)


def deform_dofs(interval: IntervalMap, t, max_motion=None) -> DeformedConfiguration:
    return interval.configuration(t, max_motion=max_motion)


def quality_report(config: DeformedConfiguration):
    """Minimum Jacobian, minimum straight-corner angle and maximum displacement."""
    mesh = config.space.mesh
    els = config.elements
    P = config.positions[mesh.triangles[els]]
    angles = triangle_angles(P)
    disp = np.linalg.norm(config.positions - config.space.dof_coords, axis=1)
    return {"min_jacobian": check_jacobians(config),
            "min_angle": float(angles.min()),
            "max_displacement": float(disp.max())}


def require_positive_jacobian(config):
    q = check_jacobians(config)
    if q <= 0.0:
        raise InvalidElement(f"isoparametric Jacobian {q:.3e} <= 0 at t={config.t}; "
                             "the time step is too large for the mesh spacing")
    return q
