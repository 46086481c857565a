import math

import numpy as np
import pytest

from unimesh.errors import EiInverseDomain
from unimesh.problems import flower_demo, get_problem, stefan_1d, stefan_2d, stefan_2d_data
from unimesh.special import bessel_j0


def test_stefan_1d_data():
    p = stefan_1d()
    assert p.dim == 1 and p.t_start == 1.0
    assert p.exact(0.0, 1.0) == pytest.approx(math.e - 1.0, rel=1e-15)
    t = np.linspace(1.0, 2.0, 20)
    assert np.max(np.abs(p.exact(p.boundary(t), t))) < 1e-15
    np.testing.assert_allclose(p.initial(np.linspace(0, 1, 5)), p.exact(np.linspace(0, 1, 5), 1.0))


def test_stefan_1d_heat_residual():
    # u = exp(t - x) - 1 gives u_t = exp(t - x) = u_xx
    p = stefan_1d()
    rng = np.random.default_rng(3)
    t = rng.uniform(1.0, 1.5, 200)
    x = rng.uniform(0.0, 1.0, 200) * t
    e = 1e-3
    ut = (p.exact(x, t + e) - p.exact(x, t - e)) / (2 * e)
    uxx = (p.exact(x + e, t) - 2 * p.exact(x, t) + p.exact(x - e, t)) / e ** 2
    # both stencils are exact up to the same cosh/sinh series; compare to the closed form
    assert np.max(np.abs(ut - np.exp(t - x) * math.sinh(e) / e)) < 1e-12
    assert np.max(np.abs(uxx - np.exp(t - x) * (2 * math.cosh(e) - 2) / e ** 2)) < 1e-7
    # Stefan condition ds/dt = -u_x at x = s(t)
    assert np.max(np.abs(p.boundary_rate(t) - np.exp(t - p.boundary(t)))) < 1e-15


def test_stefan_2d_constants():
    d = stefan_2d_data()
    assert d.r0 == pytest.approx(2.404825557695773, abs=1e-14)
    assert d.beta(0.0) == pytest.approx(1.0, abs=1e-12)
    assert d.sigma(0.0) == pytest.approx(1.0, abs=1e-12)
    assert d.alpha < 0
    x = np.random.default_rng(0).uniform(-0.7, 0.7, (50, 2))
    np.testing.assert_allclose(d.exact(x, 0.0), bessel_j0(d.r0 * np.linalg.norm(x, axis=1)), atol=1e-14)


def test_beta_decreasing():
    d = stefan_2d_data()
    t = np.linspace(0.0, 0.005, 51)
    b = np.array([d.beta(s) for s in t])
    assert np.all(np.diff(b) < 0)
    assert d.beta_dot(0.0) < 0
    # alpha < 0, so sigma = exp(alpha (beta - 1) / 2) grows as beta falls
    s = np.array([d.sigma(v) for v in t])
    assert np.all(np.diff(s) > 0)


def test_beta_dot_matches_finite_difference():
    d = stefan_2d_data()
    for t in (0.0005, 0.002, 0.0045):
        e = 1e-6
        fd = (d.beta(t + e) - d.beta(t - e)) / (2 * e)
        assert fd == pytest.approx(d.beta_dot(t), rel=1e-7)
        fd = (d.sigma(t + e) - d.sigma(t - e)) / (2 * e)
        assert fd == pytest.approx(d.sigma_dot(t), rel=1e-7)


def _radial_laplacian_fd(d, x, t, e):
    u = lambda y: d.exact(y, t)
    ex, ey = np.array([e, 0.0]), np.array([0.0, e])
    # fourth-order five-point stencils in each direction
    lap = 0.0
    for v in (ex, ey):
        lap = lap + (-u(x + 2 * v) + 16 * u(x + v) - 30 * u(x) + 16 * u(x - v) - u(x - 2 * v)) / (12 * e * e)
    return lap


def test_stefan_2d_pde_residual():
    d = stefan_2d_data()
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(100):
        t = rng.uniform(0.0005, 0.0045)
        r = 0.9 * d.sigma(t) * math.sqrt(rng.random())
        a = rng.uniform(0, 2 * math.pi)
        x = np.array([r * math.cos(a), r * math.sin(a)])
        e = 2e-5
        ut = (-d.exact(x, t + 2 * e) + 8 * d.exact(x, t + e) - 8 * d.exact(x, t - e) + d.exact(x, t - 2 * e)) / (12 * e)
        lap = _radial_laplacian_fd(d, x, t, 1e-3)
        worst = max(worst, abs(ut - lap - d.forcing(x, t)))
    assert worst < 1e-8


def test_exact_solutions_vanish_on_boundary():
    d = stefan_2d_data()
    p = stefan_2d()
    theta = np.arange(1000) / 1000
    worst = 0.0
    for t in np.linspace(0.0, 0.005, 20):
        pts = p.curve.eval(theta, t)
        worst = max(worst, np.max(np.abs(p.exact(pts, t))))
    assert worst < 1e-10
    assert d.sigma(0.005) > 1.0


def test_stefan_2d_condition():
    # d sigma / dt = -du/dn on |x| = sigma(t)
    d = stefan_2d_data()
    for t in (0.0, 0.001, 0.003, 0.005):
        s = d.sigma(t)
        e = 1e-5
        dudn = (d.exact(np.array([s + e, 0.0]), t) - d.exact(np.array([s - e, 0.0]), t)) / (2 * e)
        assert d.sigma_dot(t) == pytest.approx(-dudn, abs=1e-8)


def test_ei_domain_error():
    d = stefan_2d_data()
    # Ei(alpha) - r0^2 t e^alpha is negative for every t >= 0; large negative t
    # pushes it past zero, off the negative branch
    with pytest.raises(EiInverseDomain):
        d.beta(-10.0)


def test_flower_facts():
    p = flower_demo()
    assert p.exact is None and p.t_final == 0.06
    a = np.array([0.0])
    assert np.linalg.norm(p.curve.eval(a, 0.0)[0]) == pytest.approx(1.1, abs=1e-15)
    theta = np.arange(4000) / 4000
    r = np.linalg.norm(p.curve.eval(theta, 0.0), axis=1)
    peaks = (r > np.roll(r, 1)) & (r > np.roll(r, -1))
    assert np.count_nonzero(peaks) == 10
    t_peak = math.pi / 2 / 250
    assert np.max(np.linalg.norm(p.curve.velocity(theta, t_peak), axis=1)) == pytest.approx(25.0, rel=1e-12)
    # initial data vanishes on the initial boundary
    assert np.max(np.abs(p.initial(p.curve.eval(theta, 0.0)))) < 1e-14


def test_get_problem():
    assert get_problem("stefan2d").name == "stefan2d"
    with pytest.raises(ValueError):
        get_problem("nope")
