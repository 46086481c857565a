"""Moving a discrete field from one deformed submesh to another on the same domain.

Both the old configuration (previous interval pushed to t^{n-1}) and the new
one (fresh submesh at t^{n-1}+) mesh the same domain. Away from the boundary
strip they coincide element by element, so values are copied there and only
the remaining points go through point location and Newton inversion of the
isoparametric map.
"""
import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

from .errors import NewtonFail, PointOutside
from .fem import apply_dirichlet, geometry_at, solve, triangle_quadrature

log = logging.getLogger(__name__)

_SAME = 1e-12
# largest barycentric overshoot accepted when evaluating next to the source mesh
EXTRAPOLATION_TOL = 0.25


class PointLocator:
    """Finds (element, reference point) pairs of physical points in a configuration."""

    def __init__(self, config, k=8, tol=1e-12, max_iter=30, outside_tol=1e-6):
        self.config = config
        self.elements = np.asarray(config.elements)
        Y = config.positions[config.space.cell_dofs[self.elements]]
        self.centroids = Y.mean(axis=1)
        self.tree = cKDTree(self.centroids)
        self.k = min(k, len(self.elements))
        self.tol, self.max_iter, self.outside_tol = tol, max_iter, outside_tol

    def _invert(self, elems, x):
        cfg = self.config
        ref = cfg.space.ref
        Y = cfg.positions[cfg.space.cell_dofs[elems]]
        xi = np.full((len(elems), 2), 1.0 / 3.0)
        done = np.zeros(len(elems), dtype=bool)
        scale = 1.0 + np.linalg.norm(x, axis=1)
        act = np.arange(len(elems))
        for _ in range(self.max_iter):
            Ya, xa = Y[act], xi[act]
            r = np.einsum("na,nai->ni", ref.values(xa), Ya) - x[act]
            ok = np.linalg.norm(r, axis=1) <= self.tol * scale[act]
            done[act[ok]] = True
            act, Ya, xa, r = act[~ok], Ya[~ok], xa[~ok], r[~ok]
            if len(act) == 0:
                break
            J = np.einsum("nai,naj->nij", Ya, ref.grads(xa))
            det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
            det = np.where(np.abs(det) < 1e-300, 1e-300, det)
            dx = (J[:, 1, 1] * r[:, 0] - J[:, 0, 1] * r[:, 1]) / det
            dy = (-J[:, 1, 0] * r[:, 0] + J[:, 0, 0] * r[:, 1]) / det
            xi[act] = np.clip(xa - np.stack([dx, dy], axis=1), -2.0, 3.0)
        lam = np.stack([1.0 - xi[:, 0] - xi[:, 1], xi[:, 0], xi[:, 1]], axis=1)
        viol = np.maximum(-lam, 0.0).max(axis=1)
        # an unconverged iterate far outside the element means the point has
        # no preimage there; one still inside means Newton genuinely failed
        viol = np.where(done | (viol > self.outside_tol), viol, np.inf)
        return xi, viol

    def locate(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if len(x) == 0:
            return np.zeros(0, dtype=np.int64), np.zeros((0, 2))
        _, cand = self.tree.query(x, k=self.k)
        cand = np.asarray(cand).reshape(len(x), -1)
        n, k = cand.shape
        # most points lie in the element with the nearest centroid; only the
        # rest are inverted on every candidate
        e_out = self.elements[cand[:, 0]]
        xi_out, bv = self._invert(e_out, x)
        miss = np.flatnonzero(bv > 1e-10)
        if len(miss) and k > 1:
            elems = self.elements[cand[miss].ravel()]
            xi, viol = self._invert(elems, np.repeat(x[miss], k, axis=0))
            viol = viol.reshape(len(miss), k)
            best = np.argmin(viol, axis=1)
            sel = np.arange(len(miss)) * k + best
            e_out[miss], xi_out[miss], bv[miss] = elems[sel], xi[sel], viol[np.arange(len(miss)), best]
        if np.any(~np.isfinite(bv)):
            raise NewtonFail(f"isoparametric inversion failed for {np.count_nonzero(~np.isfinite(bv))} point(s)")
        if np.any(bv > self.outside_tol):
            raise PointOutside(f"{np.count_nonzero(bv > self.outside_tol)} point(s) outside the source "
                               f"mesh (max violation {bv.max():.2e})")
        outside = bv > 1e-10
        if np.any(outside):
            log.debug("%d point(s) evaluated just outside their source element (max overshoot %.2e)",
                      np.count_nonzero(outside), bv.max())
        return e_out, xi_out


def evaluate_at(space, config, u, x, locator=None):
    """Values of the field u (on ``space`` over ``config``) at physical points x."""
    loc = locator or PointLocator(config)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    e, xi = loc.locate(x)
    N = space.ref.values(xi)
    return np.einsum("na,na->n", N, np.asarray(u)[space.cell_dofs[e]])


@dataclass
class TransferPair:
    src_space: object
    src_config: object
    dst_space: object
    dst_config: object
    dst_inactive: np.ndarray

    def __post_init__(self):
        self._locator = None

    @property
    def locator(self):
        # The two configurations approximate the same curved boundary with
        # different elements, so target points may sit slightly outside the
        # source mesh; those are evaluated on the nearest source element.
        if self._locator is None:
            self._locator = PointLocator(self.src_config, outside_tol=EXTRAPOLATION_TOL)
        return self._locator

    def unchanged_elements(self):
        """Target elements that also belong to the source with identical geometry."""
        s, d = self.src_config, self.dst_config
        in_src = np.zeros(s.space.mesh.n_triangles, dtype=bool)
        in_src[s.elements] = True
        els = np.asarray(d.elements)
        cand = els[in_src[els]]
        dofs = d.space.cell_dofs[cand]
        diff = np.abs(s.positions[dofs] - d.positions[dofs]).max(axis=(1, 2)) if len(cand) else np.zeros(0)
        same = np.zeros(len(els), dtype=bool)
        same[np.flatnonzero(in_src[els])[diff <= _SAME]] = True
        return same

    def discrepancy_measure(self):
        """Area of target elements that differ from the source triangulation."""
        same = self.unchanged_elements()
        changed = np.asarray(self.dst_config.elements)[~same]
        if len(changed) == 0:
            return 0.0
        rule = triangle_quadrature(2 * self.dst_config.space.degree)
        geo = geometry_at(self.dst_config, changed, rule.points)
        return float(np.sum(geo.detJ * rule.weights[None, :]))


def interpolate(pair: TransferPair, u_old):
    """Nodal interpolation of the old field onto the target DOFs; inactive DOFs get 0."""
    u_old = np.asarray(u_old, dtype=float)
    ss, ds = pair.src_space, pair.dst_space
    out = np.zeros(ds.ndofs)
    mask = np.zeros(ds.ndofs, dtype=bool)
    mask[ds.dofs_of(pair.dst_config.elements)] = True
    mask[pair.dst_inactive] = False
    target = np.flatnonzero(mask)
    pts = dof_positions(ds, pair.dst_config)[target]
    copy = np.zeros(len(target), dtype=bool)
    if ss is ds or (ss.degree == ds.degree and ss.mesh is ds.mesh):
        old_pts = dof_positions(ss, pair.src_config)[target]
        in_old = np.zeros(ss.ndofs, dtype=bool)
        in_old[ss.dofs_of(pair.src_config.elements)] = True
        copy = in_old[target] & (np.abs(old_pts - pts).max(axis=1) <= _SAME)
        out[target[copy]] = u_old[target[copy]]
    rest = target[~copy]
    if len(rest):
        out[rest] = evaluate_at(ss, pair.src_config, u_old, pts[~copy], locator=pair.locator)
    return out


def dof_positions(space, config):
    """Physical positions of the DOFs of ``space`` under the geometry of ``config``."""
    if config.space is space or (config.space.degree == space.degree and config.space.mesh is space.mesh):
        return config.positions
    els = np.asarray(config.elements)
    geo = geometry_at(config, els, space.ref.nodes)
    pos = space.dof_coords.copy()
    pos[space.cell_dofs[els].ravel()] = geo.x.reshape(-1, 2)
    return pos


def l2_project(pair: TransferPair, u_old, quad_degree=None):
    """L2-orthogonal projection onto the target space with zero inactive DOFs."""
    u_old = np.asarray(u_old, dtype=float)
    ss, ds = pair.src_space, pair.dst_space
    d = pair.dst_config
    els = np.asarray(d.elements)
    qd = quad_degree or 2 * max(ds.degree, d.space.degree) + 4
    rule = triangle_quadrature(qd)
    geo = geometry_at(d, els, rule.points)
    wd = geo.detJ * rule.weights[None, :]
    N = ds.ref.values(rule.points)
    vals = np.empty(wd.shape)
    same = pair.unchanged_elements() if ss.mesh is ds.mesh else np.zeros(len(els), dtype=bool)
    if np.any(same):
        Ns = ss.ref.values(rule.points)
        vals[same] = np.einsum("qa,ea->eq", Ns, u_old[ss.cell_dofs[els[same]]])
    if np.any(~same):
        x = geo.x[~same].reshape(-1, 2)
        vals[~same] = evaluate_at(ss, pair.src_config, u_old, x, locator=pair.locator).reshape(-1, len(rule.weights))
    return _solve_projection(ds, els, wd, N, vals, pair.dst_inactive)


def _solve_projection(space, els, wd, N, vals, inactive):
    dofs = space.cell_dofs[els]
    Me = np.einsum("eq,qa,qb->eab", wd, N, N)
    re = np.einsum("eq,eq,qa->ea", wd, vals, N)
    n = space.ndofs
    rows = np.repeat(dofs[:, :, None], dofs.shape[1], axis=2).ravel()
    cols = np.repeat(dofs[:, None, :], dofs.shape[1], axis=1).ravel()
    M = sp.csr_matrix((Me.ravel(), (rows, cols)), shape=(n, n))
    r = np.bincount(dofs.ravel(), weights=re.ravel(), minlength=n)
    # DOFs outside the target elements carry no mass and are pinned to zero too
    unused = np.ones(n, dtype=bool)
    unused[dofs.ravel()] = False
    rows = np.union1d(np.asarray(inactive, dtype=np.int64), np.flatnonzero(unused))
    A, b = apply_dirichlet(M, r, rows)
    return solve(A, b)


def project_function(space, config, inactive, func, kind="interp", quad_degree=None):
    """Initial data: interpolate or L2-project an analytic function."""
    if kind == "interp":
        out = np.asarray(func(dof_positions(space, config)), dtype=float).copy()
        out[inactive] = 0.0
        mask = np.zeros(space.ndofs, dtype=bool)
        mask[space.dofs_of(config.elements)] = True
        out[~mask] = 0.0
        return out
    els = np.asarray(config.elements)
    qd = quad_degree or 2 * max(space.degree, config.space.degree) + 4
    rule = triangle_quadrature(qd)
    geo = geometry_at(config, els, rule.points)
    wd = geo.detJ * rule.weights[None, :]
    N = space.ref.values(rule.points)
    return _solve_projection(space, els, wd, N, func(geo.x), inactive)
