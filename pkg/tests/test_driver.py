import math
import os

import numpy as np
import pytest

from unimesh.cli import main, read_config_file
from unimesh.driver import (ConvergenceRow, RunConfig, convergence_study, observed_orders, run, run_1d,
                            run_2d, write_convergence_csv)
from unimesh.geometry import circle
from unimesh.problems import ProblemDefinition
from unimesh.special import bessel_j0, j0_first_root


def _fixed_1d():
    # sin profile on a boundary that stays at x = 0.7
    k, s = math.pi / 2, 0.7
    ex = lambda x, t: np.exp(-k * k * t) * np.sin(k * (s - np.asarray(x)))
    return ProblemDefinition("fixed1d", 1, None, lambda x: ex(x, 0.0), 0.0, 0.05, exact=ex,
                             boundary=lambda t: s, boundary_rate=lambda t: 0.0,
                             left_value=lambda t: float(ex(0.0, t)))


def _fixed_circle():
    r0 = j0_first_root()
    ex = lambda x, t: math.exp(-r0 * r0 * t) * bessel_j0(r0 * np.linalg.norm(np.asarray(x, float), axis=-1))
    return ProblemDefinition("fixed2d", 2, None, lambda x: ex(x, 0.0), 0.0, 0.01, exact=ex, curve=circle())


def test_observed_orders():
    assert observed_orders([4.0, 1.0, 0.25]) == [None, 2.0, 2.0]
    assert observed_orders([1.0]) == [None]


def test_fixed_boundary_1d_order_two():
    p = _fixed_1d()
    errs = []
    for j in range(4):
        cfg = RunConfig(problem="stefan1d", degree=1, tableau="sdirk3", h=0.1 / 2 ** j, dt=0.005 / 2 ** j,
                        delta=0.3, bigR=3, projector="l2", initial_projector="interp")
        errs.append(run_1d(cfg, p).l2_error)
    assert observed_orders(errs)[-1] == pytest.approx(2.0, abs=0.1)


@pytest.mark.parametrize("degree,tableau,levels", [(1, "sdirk2", 4), (2, "sdirk3", 3)])
def test_fixed_circle_order(degree, tableau, levels):
    p = _fixed_circle()
    errs = []
    for j in range(levels):
        cfg = RunConfig(problem="stefan2d", degree=degree, tableau=tableau, h=0.35 / 2 ** j, dt=0.005 / 2 ** j)
        errs.append(run_2d(cfg, p).l2_error)
    assert observed_orders(errs)[-1] == pytest.approx(degree + 1, abs=0.3)


def test_zero_data_stays_zero():
    p = ProblemDefinition("zero", 1, None, lambda x: np.zeros_like(np.asarray(x, float)), 0.0, 0.01,
                          exact=lambda x, t: np.zeros_like(np.asarray(x, float)),
                          boundary=lambda t: 0.5 + t, boundary_rate=lambda t: 1.0)
    r = run_1d(RunConfig(problem="stefan1d", degree=1, tableau="sdirk2", h=0.1, dt=0.001), p)
    assert np.max(np.abs(r.u)) == 0.0 and r.l2_error == 0.0


def test_1d_rejects_higher_degree():
    with pytest.raises(ValueError):
        run(RunConfig.for_problem("stefan1d", degree=2))


def test_csv_format(tmp_path):
    path = tmp_path / "c.csv"
    rows = [ConvergenceRow(0.25, 1e-6, 5, 1.0 / 3.0, None, 0.5), ConvergenceRow(0.125, 5e-7, 9, 0.1, 1.5, 2)]
    write_convergence_csv(path, rows)
    raw = path.read_bytes()
    assert b"\r" not in raw
    lines = raw.decode().split("\n")
    assert lines[0] == "h,dt,ndofs,l2_error,order,wall_s"
    first = lines[1].split(",")
    assert first[4] == "" and first[2] == "5"
    assert first[3] == "0.33333333333333331"     # 17 significant digits
    assert float(first[3]) == 1.0 / 3.0
    assert lines[-1] == ""


def test_sweep_is_deterministic(tmp_path):
    cfg = RunConfig.for_problem("stefan1d")
    paths = []
    for name in ("a.csv", "b.csv"):
        rows = convergence_study(cfg, 1)
        for r in rows:
            r.wall_s = 0.0
        paths.append(tmp_path / name)
        write_convergence_csv(paths[-1], rows)
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_2d_runs_are_bit_identical():
    cfg = RunConfig.for_problem("stefan2d", h=0.35, dt=0.0025, tfinal=0.005)
    a, b = run(cfg), run(cfg)
    assert np.array_equal(a.u, b.u) and a.l2_error == b.l2_error


def test_config_file_and_precedence(tmp_path, capsys):
    conf = tmp_path / "run.conf"
    conf.write_text("# 1D benchmark\nproblem = stefan1d\nh = 0.25\ndt = 1e-6  # one step\nbigR = 3\n"
                    f"out = {tmp_path / 'o'}\n")
    vals = read_config_file(conf)
    assert vals == dict(problem="stefan1d", h=0.25, dt=1e-6, bigR=3, out=str(tmp_path / "o"))
    assert main(["run", "--config", str(conf), "--h", "0.125"]) == 0
    text = capsys.readouterr().out
    assert "h=0.125" in text and "problem=stefan1d" in text
    lines = (tmp_path / "o" / "run.csv").read_text().splitlines()
    assert lines[0] == "h,dt,ndofs,l2_error,order,wall_s"
    assert float(lines[1].split(",")[0]) == 0.125


def test_config_file_rejects_unknown_key(tmp_path):
    conf = tmp_path / "bad.conf"
    conf.write_text("colour = blue\n")
    with pytest.raises(ValueError):
        read_config_file(conf)


def test_sweep_cli_writes_tables(tmp_path, capsys):
    out = tmp_path / "s"
    assert main(["sweep", "--problem", "stefan1d", "--refinements", "1", "--out", str(out)]) == 0
    conv = (out / "convergence.csv").read_text().splitlines()
    gap = (out / "gap.csv").read_text().splitlines()
    assert len(conv) == 3 and len(gap) == 3
    assert gap[0].startswith("h,gap,gap_order")
    assert conv[1].split(",")[4] == ""


def test_dumps(tmp_path):
    out = tmp_path / "d"
    cfg = RunConfig.for_problem("stefan2d", tfinal=0.01, out=str(out), dump_every=1)
    r = run(cfg)
    names = sorted(os.listdir(out))
    assert names == ["mesh_00001.txt", "mesh_00002.txt", "solution_00001.txt", "solution_00002.txt"]
    sol = (out / "solution_00002.txt").read_text().splitlines()
    assert sol[0].startswith(f"dofs {r.space.ndofs} ")
    vals = np.array([float(line.split()[2]) for line in sol[1:]])
    np.testing.assert_array_equal(vals, r.u)

    out1 = tmp_path / "d1"
    run(RunConfig.for_problem("stefan1d", out=str(out1), dump_every=1))
    assert os.listdir(out1) == ["solution_00001.txt"]
