"""Interval loop, convergence studies and CSV output."""
import csv
import logging
import math
import os
import time
from dataclasses import dataclass, fields, replace
from typing import Optional

import numpy as np

from . import oned
from .fem import FeSpace, assemble, check_jacobians, l2_error
from .geometry import closest_point, projection_stats
from .mesh import dump_mesh, equilateral_mesh
from .problems import ProblemDefinition, get_problem
from .time_stepper import StageSystem, builtin_tableau, sdirk_step
from .transfer import TransferPair, dof_positions, interpolate, l2_project, project_function
from .universal_mesh import IntervalMap, active_set, quality_report

log = logging.getLogger(__name__)

CSV_HEADER = ["h", "dt", "ndofs", "l2_error", "order", "wall_s"]


@dataclass
class RunConfig:
    problem: str = "stefan2d"
    degree: int = 2
    geom_degree: Optional[int] = None
    tableau: str = "sdirk3"
    h: float = 0.35
    dt: float = 0.005
    tfinal: Optional[float] = None
    delta: float = 0.8
    bigR: int = 3
    projector: str = "interp"
    initial_projector: Optional[str] = None
    out: Optional[str] = None
    half_width: float = 1.4
    length: float = 1.0
    dump_every: int = 0
    steps_per_interval: int = 1
    monitor: bool = False

    @classmethod
    def for_problem(cls, name, **overrides):
        prob = get_problem(name)
        base = {k: v for k, v in prob.defaults.items() if k in {f.name for f in fields(cls)}}
        base.update({k: v for k, v in overrides.items() if v is not None})
        return cls(problem=name, **base)


@dataclass
class RunResult:
    config: RunConfig
    u: np.ndarray
    t: float
    l2_error: Optional[float]
    ndofs: int
    wall_s: float
    projection_calls: int = 0
    projection_s: float = 0.0
    min_jacobian: float = math.inf
    max_boundary_residual: float = 0.0
    max_inactive_value: float = 0.0
    interp_gap: Optional[float] = None
    interp_error: Optional[float] = None
    space: object = None
    final_config: object = None
    intervals: int = 0

    @property
    def projection_share(self):
        return self.projection_s / self.wall_s if self.wall_s > 0 else 0.0


def _n_steps(t0, t1, dt):
    n = max(1, int(round((t1 - t0) / dt)))
    if abs(n * dt - (t1 - t0)) > 1e-9 * max(1.0, abs(t1 - t0)):
        log.warning("dt=%g does not divide the time interval; using %d steps of %g", dt, n, (t1 - t0) / n)
    return n, (t1 - t0) / n


def run(config: RunConfig) -> RunResult:
    prob = get_problem(config.problem)
    if config.tfinal is not None:
        prob.t_final = config.tfinal
    return run_1d(config, prob) if prob.dim == 1 else run_2d(config, prob)


def run_1d(config: RunConfig, prob: Optional[ProblemDefinition] = None) -> RunResult:
    """Time integration on a one-dimensional universal mesh (P1 only)."""
    prob = prob or get_problem(config.problem)
    if config.degree != 1:
        raise ValueError("the one-dimensional solver supports degree 1 only")
    start = time.perf_counter()
    grid = oned.uniform_grid(config.h, config.length)
    tab = builtin_tableau(config.tableau)
    t0, t1 = prob.t_start, (config.tfinal if config.tfinal is not None else prob.t_final)
    n_intervals, dt_int = _n_steps(t0, t1, config.dt * config.steps_per_interval)
    dt = dt_int / config.steps_per_interval
    left = prob.left_value or (lambda t: 0.0)
    u = x_prev = None
    t = t0
    for n in range(n_intervals):
        im = oned.IntervalMap1d(grid, prob.boundary, prob.boundary_rate, t, config.delta, config.bigR)
        x0 = im.nodes(t)
        ne = im.n_active_elements
        inactive = im.inactive()

        def values(tt, k=len(inactive)):
            v = np.zeros(k)
            v[0] = left(tt)
            return v

        if n == 0:
            src = prob.initial
            breaks = ()
        else:
            xp, up = x_prev, u.copy()
            src = lambda z, xp=xp, up=up: oned.p1_eval(xp, up, z)
            breaks = xp
        kind = (config.initial_projector or config.projector) if n == 0 else config.projector
        if kind == "l2":
            u = oned.l2_project_1d(x0, ne, inactive, values(t), src, breaks)
        else:
            u = np.asarray(src(x0), dtype=float).copy()
            u[inactive] = values(t)

        def system(ti, im=im, ne=ne, inactive=inactive):
            im.check(ti)
            M, K, B, f = oned.assemble_1d(im.nodes(ti), im.velocities(ti), ne, prob.forcing, ti)
            return StageSystem(M, K, B, f, inactive, values(ti))

        for k in range(config.steps_per_interval):
            u = sdirk_step(tab, dt, t + k * dt, u, system)
        t = t0 + (n + 1) * dt_int
        x_prev = im.nodes(t)
        if config.out and config.dump_every and (n + 1) % config.dump_every == 0:
            _dump_1d(config.out, n + 1, t, x_prev[:ne + 1], u[:ne + 1])
    res = RunResult(config, u, t, None, ne - 1, 0.0, intervals=n_intervals)
    if prob.exact is not None:
        ex = lambda z: prob.exact(z, t)
        uh = lambda z: oned.p1_eval(x_prev, u, z)
        nodal = prob.exact(x_prev, t)
        nodal[ne + 1:] = 0.0
        ih = lambda z: oned.p1_eval(x_prev, nodal, z)
        res.l2_error = oned.l2_diff_1d(x_prev, ne, uh, ex)
        res.interp_error = oned.l2_diff_1d(x_prev, ne, ih, ex)
        res.interp_gap = oned.l2_diff_1d(x_prev, ne, uh, ih)
    res.space = x_prev
    res.wall_s = time.perf_counter() - start
    return res


def _dump_1d(out, n, t, x, u):
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, f"solution_{n:05d}.txt"), "w", newline="\n") as fh:
        fh.write(f"nodes {len(x)} t {t:.17g}\n")
        for xi, val in zip(x, u):
            fh.write(f"{xi:.17g} {val:.17g}\n")


def _dump(out, n, space, config, u):
    os.makedirs(out, exist_ok=True)
    els = np.asarray(config.elements)
    gdofs = config.space.cell_dofs[els]
    used, local = np.unique(gdofs, return_inverse=True)
    dump_mesh(os.path.join(out, f"mesh_{n:05d}.txt"), config.positions[used], local.reshape(gdofs.shape),
              degree=config.space.degree)
    pos = dof_positions(space, config)
    with open(os.path.join(out, f"solution_{n:05d}.txt"), "w", newline="\n") as fh:
        fh.write(f"dofs {space.ndofs} t {config.t:.17g}\n")
        for (x, y), val in zip(pos, u):
            fh.write(f"{x:.17g} {y:.17g} {val:.17g}\n")


def run_2d(config: RunConfig, prob: Optional[ProblemDefinition] = None) -> RunResult:
    """Universal mesh integration in two dimensions with one SDIRK step per interval."""
    prob = prob or get_problem(config.problem)
    start = time.perf_counter()
    projection_stats.reset()
    mesh = equilateral_mesh(config.h, config.half_width)
    space = FeSpace(mesh, config.degree)
    pg = config.geom_degree or config.degree
    if pg < config.degree:
        raise ValueError("geometry degree must be at least the solution degree")
    gspace = space if pg == config.degree else FeSpace(mesh, pg)
    tab = builtin_tableau(config.tableau)
    t0, t1 = prob.t_start, (config.tfinal if config.tfinal is not None else prob.t_final)
    n_intervals, dt_int = _n_steps(t0, t1, config.dt * config.steps_per_interval)
    dt = dt_int / config.steps_per_interval
    max_motion = 0.5 * config.h
    res = RunResult(config, None, t0, None, 0, 0.0, intervals=n_intervals)
    u = prev_cfg = None
    t = t0
    for n in range(n_intervals):
        imap = IntervalMap(mesh, prob.curve, t, config.delta, config.bigR, geom_space=gspace)
        act = active_set(space, imap.submesh)
        cfg0 = imap.configuration(t)
        if n == 0:
            u = project_function(space, cfg0, act.inactive, prob.initial,
                                 kind=config.initial_projector or config.projector)
        else:
            pair = TransferPair(space, prev_cfg, space, cfg0, act.inactive)
            u = interpolate(pair, u) if config.projector == "interp" else l2_project(pair, u)
        cache = {}

        def system(ti, imap=imap, act=act, cache=cache):
            cfg = imap.configuration(ti, max_motion=max_motion)
            cache["cfg"] = cfg
            if config.monitor:
                _monitor(res, prob, cfg, space, act)
            S = assemble(space, cfg, prob.coeffs, prob.forcing, ti)
            return StageSystem(S.M, S.K, S.B, S.f, act.inactive)

        for k in range(config.steps_per_interval):
            u = sdirk_step(tab, dt, t + k * dt, u, system)
        t = t0 + (n + 1) * dt_int
        prev_cfg = cache["cfg"]
        if abs(prev_cfg.t - t) > 1e-14 * max(1.0, abs(t)):
            prev_cfg = imap.configuration(t)
        if config.monitor:
            res.max_inactive_value = max(res.max_inactive_value, float(np.max(np.abs(u[act.inactive]))))
        if log.isEnabledFor(logging.DEBUG):
            log.debug("interval %d t=%.6g quality %s", n + 1, t, quality_report(prev_cfg))
        if config.out and config.dump_every and (n + 1) % config.dump_every == 0:
            _dump(config.out, n + 1, space, prev_cfg, u)
    res.u, res.t = u, t
    res.space, res.final_config = space, prev_cfg
    res.ndofs = len(act.active)
    if prob.exact is not None:
        res.l2_error = l2_error(space, prev_cfg, u, prob.exact, t)
        nodal = prob.exact(dof_positions(space, prev_cfg), t)
        nodal[act.inactive] = 0.0
        res.interp_gap = l2_error(space, prev_cfg, u - nodal, lambda x, tt: np.zeros(x.shape[:-1]), t)
        res.interp_error = l2_error(space, prev_cfg, nodal, prob.exact, t)
    res.wall_s = time.perf_counter() - start
    snap = projection_stats.snapshot()
    res.projection_calls, res.projection_s = snap["calls"], snap["seconds"]
    return res


def _monitor(res, prob, cfg, space, act):
    res.min_jacobian = min(res.min_jacobian, check_jacobians(cfg))
    gdofs = cfg.space.edge_dofs(_boundary_edges(cfg, act))
    if len(gdofs):
        phi = closest_point(prob.curve, cfg.positions[gdofs], cfg.t, strict=False).signed_distance
        res.max_boundary_residual = max(res.max_boundary_residual, float(np.max(np.abs(phi))))


def _boundary_edges(cfg, act):
    mesh = cfg.space.mesh
    keep = np.zeros(mesh.n_triangles, dtype=bool)
    keep[cfg.elements] = True
    et = mesh.edge_triangles
    cnt = np.zeros(len(et), dtype=int)
    for k in range(2):
        ok = et[:, k] >= 0
        cnt[ok] += keep[et[ok, k]]
    return np.flatnonzero(cnt == 1)


@dataclass
class ConvergenceRow:
    h: float
    dt: float
    ndofs: int
    l2_error: float
    order: Optional[float]
    wall_s: float
    interp_gap: Optional[float] = None
    interp_error: Optional[float] = None


def observed_orders(errors, ratio=2.0):
    out = [None]
    for a, b in zip(errors[:-1], errors[1:]):
        out.append(math.log(a / b) / math.log(ratio) if a > 0 and b > 0 else None)
    return out


def convergence_study(config: RunConfig, refinements: int, start: int = 0):
    """Runs with h = h0 / 2^k and dt = dt0 / 2^k for k = start..refinements."""
    rows = []
    for k in range(start, refinements + 1):
        cfg = replace(config, h=config.h / 2 ** k, dt=config.dt / 2 ** k)
        r = run(cfg)
        rows.append(ConvergenceRow(cfg.h, cfg.dt, r.ndofs, r.l2_error, None, r.wall_s,
                                   r.interp_gap, r.interp_error))
        log.info("h=%g dt=%g error=%.3e wall=%.1fs", cfg.h, cfg.dt, r.l2_error or float("nan"), r.wall_s)
    for row, order in zip(rows, observed_orders([r.l2_error for r in rows])):
        row.order = order
    return rows


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.17g}"


def write_convergence_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in rows:
            w.writerow([_fmt(r.h), _fmt(r.dt), _fmt(r.ndofs), _fmt(r.l2_error), _fmt(r.order), _fmt(r.wall_s)])


def interpolant_gap_study(config: RunConfig, refinements: int, path=None):
    """Error split into ||u_h - i_h u|| and ||i_h u - u|| across refinements."""
    rows = convergence_study(config, refinements)
    gap_orders = observed_orders([r.interp_gap for r in rows])
    int_orders = observed_orders([r.interp_error for r in rows])
    table = []
    for r, go, io in zip(rows, gap_orders, int_orders):
        table.append(dict(h=r.h, gap=r.interp_gap, gap_order=go, interp_error=r.interp_error,
                          interp_order=io, l2_error=r.l2_error, order=r.order,
                          ndofs=r.ndofs, wall_s=r.wall_s))
    if path:
        keys = ["h", "gap", "gap_order", "interp_error", "interp_order", "l2_error", "order"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(keys)
            for row in table:
                w.writerow([_fmt(row[k]) for k in keys])
    return table
