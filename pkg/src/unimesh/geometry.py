"""Moving closed curves and the geometry queries the universal mesh needs.

A :class:`MovingCurve` is a counterclockwise parametrization c(theta, t),
theta in [0, 1), of the boundary of a moving domain. Queries are
vectorized: points are arrays of shape (..., 2) and results carry the same
leading shape.

Sign conventions
----------------
* signed distance is positive outside the domain,
* the normal points outward, the tangent along increasing theta,
* ``curvature`` is positive on convex arcs (1/rho for a circle).

With these conventions the second derivative of |x - c(s)|^2 in arclength s
at the projection equals ``2 * (1 + signed_distance * curvature)``, which
is nonnegative whenever the projection is unique.
"""
import math
import threading
import time
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.spatial import cKDTree

from .errors import (DegenerateProjection, NoConvergence, NonUniqueProjection,
                     OnBoundary)

TWO_PI = 2.0 * math.pi


class ProjectionStats:
    """Counts closest-point evaluations and the wall time spent in them."""

    def __init__(self):
        self._lock = threading.Lock()
        self.calls = 0
        self.points = 0
        self.seconds = 0.0

    def record(self, npoints, seconds):
        with self._lock:
            self.calls += 1
            self.points += npoints
            self.seconds += seconds

    def reset(self):
        with self._lock:
            self.calls = 0
            self.points = 0
            self.seconds = 0.0

    def snapshot(self):
        return {"calls": self.calls, "points": self.points, "seconds": self.seconds}


projection_stats = ProjectionStats()


@dataclass(frozen=True)
class MovingCurve:
    """Closed C2 curve c(theta, t) with analytic derivatives.

    ``velocity`` is dc/dt at fixed theta and ``velocity_d_theta`` its theta
    derivative. All callables take an array of theta and a scalar t and
    return arrays of shape theta.shape + (2,).
    """

    eval: Callable
    d_theta: Callable
    d_theta2: Callable
    velocity: Callable
    velocity_d_theta: Callable
    name: str = "curve"
    n_samples: int = 256
    orientation: str = "counterclockwise"

    def __call__(self, theta, t):
        return self.eval(theta, t)

    def check_embedding(self, t, n=4096):
        """Dense-sampling check that c(., t) is regular and simple."""
        theta = np.arange(n) / n
        d1 = self.d_theta(theta, t)
        if np.min(np.linalg.norm(d1, axis=-1)) <= 0.0:
            return False
        pts = self.eval(theta, t)
        seg = np.roll(pts, -1, axis=0) - pts
        # winding of the tangent must be exactly one full turn
        ang = np.arctan2(d1[:, 1], d1[:, 0])
        turn = np.sum(np.angle(np.exp(1j * (np.roll(ang, -1) - ang))))
        area = 0.5 * np.sum(pts[:, 0] * np.roll(pts[:, 1], -1) - np.roll(pts[:, 0], -1) * pts[:, 1])
        return bool(abs(turn - TWO_PI) < 1e-6 and area > 0 and np.all(np.linalg.norm(seg, axis=-1) > 0))


def _unit(u):
    return u / np.linalg.norm(u, axis=-1, keepdims=True)


def polar_curve(radius, d_radius, d2_radius, d_radius_dt, d2_radius_dt_dangle, name="polar",
                n_samples=256):
    """Star-shaped curve |x| = r(angle, t), angle = 2 pi theta.

    ``d_radius`` and ``d2_radius`` are angle derivatives; ``d_radius_dt`` is
    dr/dt and ``d2_radius_dt_dangle`` its angle derivative.
    """

    def frame(theta):
        a = TWO_PI * np.asarray(theta, dtype=float)
        er = np.stack([np.cos(a), np.sin(a)], axis=-1)
        ea = np.stack([-np.sin(a), np.cos(a)], axis=-1)
        return a, er, ea

    def c(theta, t):
        a, er, _ = frame(theta)
        return radius(a, t)[..., None] * er

    def c1(theta, t):
        a, er, ea = frame(theta)
        r = radius(a, t)[..., None]
        dr = d_radius(a, t)[..., None]
        return TWO_PI * (dr * er + r * ea)

    def c2(theta, t):
        a, er, ea = frame(theta)
        r = radius(a, t)[..., None]
        dr = d_radius(a, t)[..., None]
        ddr = d2_radius(a, t)[..., None]
        return TWO_PI ** 2 * ((ddr - r) * er + 2.0 * dr * ea)

    def vel(theta, t):
        a, er, _ = frame(theta)
        return d_radius_dt(a, t)[..., None] * er

    def vel1(theta, t):
        a, er, ea = frame(theta)
        rt = d_radius_dt(a, t)[..., None]
        rta = d2_radius_dt_dangle(a, t)[..., None]
        return TWO_PI * (rta * er + rt * ea)

    return MovingCurve(c, c1, c2, vel, vel1, name=name, n_samples=n_samples)


def circle(rho=lambda t: 1.0, drho=lambda t: 0.0, name="circle", n_samples=256):
    """Circle centred at the origin with radius rho(t)."""

    def full(f):
        return lambda a, t: np.full(np.shape(a), float(f(t)))

    zero = lambda a, t: np.zeros(np.shape(a))
    return polar_curve(full(rho), zero, zero, full(drho), zero, name=name, n_samples=n_samples)


def expanding_circle(rate=1.0):
    """Circle of radius 1 + rate * t."""
    return circle(lambda t: 1.0 + rate * t, lambda t: rate, name="expanding_circle")


def ellipse(a=2.0, b=1.0, n_samples=256):
    """Stationary axis-aligned ellipse with semi-axes a, b."""

    def c(theta, t):
        s = TWO_PI * np.asarray(theta, dtype=float)
        return np.stack([a * np.cos(s), b * np.sin(s)], axis=-1)

    def c1(theta, t):
        s = TWO_PI * np.asarray(theta, dtype=float)
        return TWO_PI * np.stack([-a * np.sin(s), b * np.cos(s)], axis=-1)

    def c2(theta, t):
        s = TWO_PI * np.asarray(theta, dtype=float)
        return -TWO_PI ** 2 * np.stack([a * np.cos(s), b * np.sin(s)], axis=-1)

    def zero(theta, t):
        return np.zeros(np.shape(theta) + (2,))

    return MovingCurve(c, c1, c2, zero, zero, name="ellipse", n_samples=n_samples)


def flower(amplitude=0.1, lobes=10, frequency=250.0, n_samples=256):
    """Boundary |x| = 1 + amplitude cos(lobes angle) cos(frequency t)."""
    A, m, w = amplitude, lobes, frequency
    r = lambda a, t: 1.0 + A * np.cos(m * a) * math.cos(w * t)
    dr = lambda a, t: -A * m * np.sin(m * a) * math.cos(w * t)
    ddr = lambda a, t: -A * m * m * np.cos(m * a) * math.cos(w * t)
    rt = lambda a, t: -A * w * np.cos(m * a) * math.sin(w * t)
    rta = lambda a, t: A * w * m * np.sin(m * a) * math.sin(w * t)
    return polar_curve(r, dr, ddr, rt, rta, name="flower", n_samples=n_samples)


@dataclass
class ProjectionResult:
    point: np.ndarray
    theta: np.ndarray
    signed_distance: np.ndarray
    normal: np.ndarray
    tangent: np.ndarray
    curvature: np.ndarray

    def __getitem__(self, idx):
        return ProjectionResult(self.point[idx], self.theta[idx], self.signed_distance[idx],
                                self.normal[idx], self.tangent[idx], self.curvature[idx])


def _newton_polish(curve, x, theta, t, max_iter=50):
    # Minimize |x - c(theta)|^2: root of g = (c - x) . c'
    dtheta_max = 1.0 / curve.n_samples
    theta = theta.copy()
    active = np.ones(len(theta), dtype=bool)
    for _ in range(max_iter):
        if not np.any(active):
            break
        th = theta[active]
        xa = x[active]
        c = curve.eval(th, t)
        c1 = curve.d_theta(th, t)
        c2 = curve.d_theta2(th, t)
        diff = c - xa
        g = np.einsum("ij,ij->i", diff, c1)
        dg = np.einsum("ij,ij->i", c1, c1) + np.einsum("ij,ij->i", diff, c2)
        speed = np.sqrt(np.einsum("ij,ij->i", c1, c1))
        safe = dg > 1e-3 * speed ** 2
        step = np.where(safe, g / np.where(safe, dg, 1.0), np.sign(g) * dtheta_max)
        step = np.clip(step, -dtheta_max, dtheta_max)
        theta[active] = th - step
        scale = 1.0 + np.linalg.norm(xa, axis=-1)
        done = (np.abs(g) <= 1e-14 * speed * scale) | (np.abs(step) < 1e-16)
        idx = np.flatnonzero(active)
        active[idx[done]] = False
    if np.any(active):
        raise NoConvergence(f"closest point Newton failed for {np.count_nonzero(active)} points")
    return theta


def _local_minima(d2):
    left = np.roll(d2, 1, axis=1)
    right = np.roll(d2, -1, axis=1)
    return (d2 <= left) & (d2 <= right)


def closest_point(curve: MovingCurve, x, t: float, strict: bool = True,
                  n_samples: Optional[int] = None, theta0=None) -> ProjectionResult:
    """Closest point projection of x onto the curve at time t.

    The two best sampled local minima are polished by Newton's method on
    (c - x) . c' = 0 and the nearer one wins. With ``strict`` a
    NonUniqueProjection is raised when both are equally near (to 1e-9) yet
    distinct. A known nearby parameter ``theta0`` (e.g. the projection at a
    slightly different time) skips the global search.
    """
    start = time.perf_counter()
    x = np.asarray(x, dtype=float)
    shape = x.shape[:-1]
    xf = x.reshape(-1, 2)
    if theta0 is not None:
        theta = _newton_polish(curve, xf, np.asarray(theta0, dtype=float).reshape(-1), t)
        return _result(curve, xf, np.mod(theta, 1.0), t, shape, start)
    n = n_samples or curve.n_samples
    samples = np.arange(n) / n
    cs = curve.eval(samples, t)
    d2 = ((xf[:, None, :] - cs[None, :, :]) ** 2).sum(axis=-1)
    masked = np.where(_local_minima(d2), d2, np.inf)
    order = np.argpartition(masked, 1, axis=1)[:, :2]
    rows = np.arange(len(xf))
    swap = masked[rows, order[:, 1]] < masked[rows, order[:, 0]]
    order[swap] = order[swap][:, ::-1]
    th1 = samples[order[:, 0]]
    th1 = _newton_polish(curve, xf, th1, t)
    has_second = np.isfinite(masked[np.arange(len(xf)), order[:, 1]])
    theta = th1
    if np.any(has_second):
        sel = np.flatnonzero(has_second)
        th2 = _newton_polish(curve, xf[sel], samples[order[sel, 1]], t)
        dist1 = np.linalg.norm(curve.eval(th1[sel], t) - xf[sel], axis=-1)
        dist2 = np.linalg.norm(curve.eval(th2, t) - xf[sel], axis=-1)
        better = dist2 < dist1
        theta = th1.copy()
        theta[sel[better]] = th2[better]
        if strict:
            gap = np.abs(np.mod(th1[sel] - th2 + 0.5, 1.0) - 0.5)
            tie = (np.abs(dist1 - dist2) < 1e-9) & (gap > 2.0 / n)
            if np.any(tie):
                raise NonUniqueProjection(
                    f"{np.count_nonzero(tie)} point(s) equidistant from distinct arcs, "
                    f"e.g. {xf[sel[tie]][0]}")
    return _result(curve, xf, np.mod(theta, 1.0), t, shape, start)


def _result(curve, xf, theta, t, shape, start):
    c = curve.eval(theta, t)
    c1 = curve.d_theta(theta, t)
    c2 = curve.d_theta2(theta, t)
    speed = np.linalg.norm(c1, axis=-1)
    tangent = c1 / speed[:, None]
    normal = np.stack([tangent[:, 1], -tangent[:, 0]], axis=-1)
    phi = np.einsum("ij,ij->i", xf - c, normal)
    kappa = (c1[:, 0] * c2[:, 1] - c1[:, 1] * c2[:, 0]) / speed ** 3
    projection_stats.record(len(xf), time.perf_counter() - start)
    return ProjectionResult(
        point=c.reshape(shape + (2,)),
        theta=theta.reshape(shape),
        signed_distance=phi.reshape(shape),
        normal=normal.reshape(shape + (2,)),
        tangent=tangent.reshape(shape + (2,)),
        curvature=kappa.reshape(shape),
    )


def banded_projection(curve: MovingCurve, x, t: float, band: float,
                      n_dense: Optional[int] = None) -> ProjectionResult:
    """Closest point data, exact only where the distance to the curve is below ``band``.

    Near points are polished by Newton's method from the nearest dense sample,
    which presumes ``band`` is below the smallest radius of curvature.
    Farther points get the sign, distance and normal of their nearest dense
    curve sample. The sign is reliable there because the sampling error is
    second order in the sample spacing while the distance exceeds ``band``.
    """
    start = time.perf_counter()
    x = np.asarray(x, dtype=float)
    xf = x.reshape(-1, 2)
    n = n_dense or max(8 * curve.n_samples, 2048)
    samples = np.arange(n) / n
    cs = curve.eval(samples, t)
    spacing = float(np.max(np.linalg.norm(np.roll(cs, -1, axis=0) - cs, axis=1)))
    dist, near = cKDTree(cs).query(xf)
    close = dist < band + 2.0 * spacing
    c1 = curve.d_theta(samples[near], t)
    tangent = c1 / np.linalg.norm(c1, axis=-1)[:, None]
    normal = np.stack([tangent[:, 1], -tangent[:, 0]], axis=-1)
    side = np.where(np.einsum("ij,ij->i", xf - cs[near], normal) >= 0.0, 1.0, -1.0)
    c2 = curve.d_theta2(samples[near], t)
    kappa = (c1[:, 0] * c2[:, 1] - c1[:, 1] * c2[:, 0]) / np.linalg.norm(c1, axis=-1) ** 3
    out = ProjectionResult(point=cs[near].copy(), theta=samples[near].copy(),
                           signed_distance=side * dist, normal=normal, tangent=tangent,
                           curvature=kappa)
    projection_stats.record(int(np.count_nonzero(~close)), time.perf_counter() - start)
    if np.any(close):
        # near the curve the nearest sample sits beside the unique minimizer
        theta = _newton_polish(curve, xf[close], samples[near[close]], t)
        exact = _result(curve, xf[close], np.mod(theta, 1.0), t, (int(np.count_nonzero(close)),),
                        time.perf_counter())
        for name in ("point", "theta", "signed_distance", "normal", "tangent", "curvature"):
            getattr(out, name)[close] = getattr(exact, name)
    shape = x.shape[:-1]
    return ProjectionResult(out.point.reshape(shape + (2,)), out.theta.reshape(shape),
                            out.signed_distance.reshape(shape), out.normal.reshape(shape + (2,)),
                            out.tangent.reshape(shape + (2,)), out.curvature.reshape(shape))


def signed_distance(curve, x, t):
    return closest_point(curve, x, t, strict=False).signed_distance


def is_inside(curve, x, t):
    """True where x lies strictly inside the domain bounded by the curve."""
    phi = signed_distance(curve, x, t)
    if np.any(np.abs(phi) <= 1e-13):
        raise OnBoundary("query point lies on the curve")
    return phi < 0.0


def projection_velocity(curve, x, t, result: Optional[ProjectionResult] = None):
    """Time derivative of the closest point projection at a fixed point x.

    Normal part is the boundary normal speed; the tangential part is
    phi * d(v_n)/ds / (1 + phi * curvature) with s the arclength.
    """
    x = np.asarray(x, dtype=float)
    res = result if result is not None else closest_point(curve, x, t)
    shape = x.shape[:-1]
    theta = res.theta.reshape(-1)
    n = res.normal.reshape(-1, 2)
    tg = res.tangent.reshape(-1, 2)
    phi = res.signed_distance.reshape(-1)
    k = res.curvature.reshape(-1)
    speed = np.linalg.norm(curve.d_theta(theta, t), axis=-1)
    v = curve.velocity(theta, t)
    dv_ds = curve.velocity_d_theta(theta, t) / speed[:, None]
    vn = np.einsum("ij,ij->i", v, n)
    dvn_ds = np.einsum("ij,ij->i", n, dv_ds) + k * np.einsum("ij,ij->i", tg, v)
    denom = 1.0 + phi * k
    if np.any(denom <= 1e-10):
        raise DegenerateProjection("point at or beyond the focal distance of the curve")
    sigma = phi * dvn_ds / denom
    out = vn[:, None] * n + sigma[:, None] * tg
    return out.reshape(shape + (2,))


def gamma_map(curve, x, t_ref, t, base: Optional[np.ndarray] = None):
    """pi^t(pi^{t_ref}(x)); ``base`` may carry a precomputed pi^{t_ref}(x)."""
    q = closest_point(curve, x, t_ref).point if base is None else base
    if t == t_ref and base is not None:
        return np.array(q, dtype=float)
    return closest_point(curve, q, t).point


def gamma_dot(curve, x, t_ref, t, base: Optional[np.ndarray] = None):
    """d/dt of gamma_map at fixed x."""
    q = closest_point(curve, x, t_ref).point if base is None else base
    return projection_velocity(curve, q, t)
