"""Command line entry point: ``unimesh run`` and ``unimesh sweep``."""
import argparse
import logging
import os
import sys
from dataclasses import replace

from .driver import (ConvergenceRow, RunConfig, interpolant_gap_study, run, write_convergence_csv)
from .problems import PROBLEMS

# flag name -> (RunConfig field, type)
_KEYS = {
    "problem": ("problem", str),
    "degree": ("degree", int),
    "tableau": ("tableau", str),
    "h": ("h", float),
    "dt": ("dt", float),
    "tfinal": ("tfinal", float),
    "delta": ("delta", float),
    "bigR": ("bigR", int),
    "projector": ("projector", str),
    "out": ("out", str),
    "dump-every": ("dump_every", int),
    "refinements": ("refinements", int),
}


def read_config_file(path):
    """Line-based ``key = value`` file; blank lines and ``#`` comments are skipped."""
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, val = (s.strip() for s in line.split("=", 1))
            key = key.replace("_", "-")
            if key not in _KEYS:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            values[_KEYS[key][0]] = _KEYS[key][1](val)
    return values


def _parser():
    p = argparse.ArgumentParser(prog="unimesh", description="Universal mesh solver for moving-boundary heat problems.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("run", "sweep"):
        s = sub.add_parser(name)
        s.add_argument("--config", help="key = value file; command line flags take precedence")
        s.add_argument("--problem", choices=sorted(PROBLEMS))
        s.add_argument("--degree", type=int, choices=[1, 2, 3])
        s.add_argument("--tableau", choices=["sdirk2", "sdirk3", "sdirk4"])
        s.add_argument("--h", type=float)
        s.add_argument("--dt", type=float)
        s.add_argument("--tfinal", type=float)
        s.add_argument("--delta", type=float)
        s.add_argument("--bigR", type=int)
        s.add_argument("--projector", choices=["interp", "l2"])
        s.add_argument("--out", help="output directory")
        s.add_argument("--dump-every", type=int, dest="dump_every",
                       help="write mesh and solution dumps every n intervals")
        s.add_argument("-v", "--verbose", action="store_true")
        if name == "sweep":
            s.add_argument("--refinements", type=int, help="highest refinement level K (h = h0 / 2^k)")
    return p


def _settings(args):
    settings = read_config_file(args.config) if args.config else {}
    for key, _ in _KEYS.values():
        val = getattr(args, key, None)
        if val is not None:
            settings[key] = val
    return settings


def _format(x):
    return "-" if x is None else f"{x:.4g}"


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    settings = _settings(args)
    problem = settings.pop("problem", "stefan2d")
    refinements = settings.pop("refinements", 3)
    out = settings.get("out")
    config = RunConfig.for_problem(problem, **settings)
    if out:
        os.makedirs(out, exist_ok=True)

    if args.command == "run":
        res = run(config)
        print(f"problem={problem} degree={config.degree} tableau={config.tableau} h={config.h:g} dt={config.dt:g}")
        print(f"t={res.t:.17g} ndofs={res.ndofs} l2_error={_format(res.l2_error)} wall_s={res.wall_s:.3f}")
        if res.projection_calls:
            print(f"closest_point calls={res.projection_calls} share={res.projection_share:.3f}")
        if out:
            row = ConvergenceRow(config.h, config.dt, res.ndofs, res.l2_error, None, res.wall_s)
            write_convergence_csv(os.path.join(out, "run.csv"), [row])
        return 0

    # sweep
    path = os.path.join(out, "gap.csv") if out else None
    table = interpolant_gap_study(replace(config, out=None, dump_every=0), refinements, path=path)
    rows = [ConvergenceRow(config.h / 2 ** k, config.dt / 2 ** k, r["ndofs"], r["l2_error"], r["order"], r["wall_s"])
            for k, r in enumerate(table)]
    if out:
        write_convergence_csv(os.path.join(out, "convergence.csv"), rows)
    print(f"{'h':>10} {'dt':>10} {'ndofs':>7} {'l2_error':>11} {'order':>6} {'gap':>11} {'gap_order':>9}")
    for r, row in zip(table, rows):
        print(f"{row.h:10.4g} {row.dt:10.4g} {row.ndofs:7d} {_format(row.l2_error):>11} {_format(row.order):>6} "
              f"{_format(r['gap']):>11} {_format(r['gap_order']):>9}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
