"""Benchmark moving-boundary problems with prescribed boundary motion."""
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np

from .errors import EiInverseDomain, OutOfBranch
from .fem import Coefficients
from .geometry import MovingCurve, circle, flower
from .special import bessel_j0, bessel_j0_prime, ei_inverse, exp_integral_ei, j0_first_root


@dataclass
class ProblemDefinition:
    name: str
    dim: int
    forcing: Optional[Callable]
    initial: Callable
    t_start: float
    t_final: float
    exact: Optional[Callable] = None
    curve: Optional[MovingCurve] = None
    boundary: Optional[Callable] = None        # 1D: s(t)
    boundary_rate: Optional[Callable] = None   # 1D: ds/dt
    left_value: Optional[Callable] = None      # 1D: u(0, t)
    coeffs: Coefficients = field(default_factory=Coefficients)
    defaults: dict = field(default_factory=dict)


def stefan_1d():
    """u = exp(t - x) - 1 on 0 < x < s(t) = t, t in [1, 1 + 1e-6]."""

    def exact(x, t):
        return np.exp(t - np.asarray(x)) - 1.0

    return ProblemDefinition(
        name="stefan1d", dim=1, forcing=None,
        initial=lambda x: exact(x, 1.0),
        t_start=1.0, t_final=1.0 + 1e-6, exact=exact,
        boundary=lambda t: t, boundary_rate=lambda t: 1.0,
        left_value=lambda t: math.exp(t) - 1.0,
        defaults=dict(degree=1, tableau="sdirk2", h=0.25, dt=1e-6, delta=0.3, bigR=3,
                      projector="l2", initial_projector="interp", length=1.0))


class Stefan2dData:
    """Radius sigma(t), amplitude beta(t) and the constants of the 2D benchmark."""

    def __init__(self):
        self.r0 = j0_first_root()
        self.alpha = 2.0 * bessel_j0_prime(self.r0) / self.r0
        self._ei_alpha = exp_integral_ei(self.alpha)
        self._rate = self.r0 ** 2 * math.exp(self.alpha)
        self._beta = lru_cache(maxsize=4096)(self._beta_uncached)

    def _beta_uncached(self, t):
        try:
            return ei_inverse(self._ei_alpha - self._rate * t) / self.alpha
        except OutOfBranch as exc:
            raise EiInverseDomain(f"t={t!r} leaves the invertible branch of Ei") from exc

    def beta(self, t):
        return self._beta(float(t))

    def beta_dot(self, t):
        return -self.r0 ** 2 * self.beta(t) / self.sigma(t) ** 2

    def sigma(self, t):
        return math.exp(0.5 * self.alpha * (self.beta(t) - 1.0))

    def sigma_dot(self, t):
        return 0.5 * self.sigma(t) * self.alpha * self.beta_dot(t)

    def exact(self, x, t):
        r = np.linalg.norm(np.asarray(x, dtype=float), axis=-1)
        return self.beta(t) * bessel_j0(self.r0 * r / self.sigma(t))

    def forcing(self, x, t):
        r = np.linalg.norm(np.asarray(x, dtype=float), axis=-1)
        s, b, a, r0 = self.sigma(t), self.beta(t), self.alpha, self.r0
        return a * r0 ** 3 * b * b * r / (2.0 * s ** 3) * bessel_j0_prime(r0 * r / s)


@lru_cache(maxsize=1)
def stefan_2d_data():
    return Stefan2dData()


def stefan_2d(t_final=0.005):
    """u = beta(t) J0(r0 |x| / sigma(t)) inside the circle of radius sigma(t)."""
    d = stefan_2d_data()
    curve = circle(d.sigma, d.sigma_dot, name="stefan2d")
    return ProblemDefinition(
        name="stefan2d", dim=2, forcing=d.forcing,
        initial=lambda x: d.exact(x, 0.0), t_start=0.0, t_final=t_final,
        exact=d.exact, curve=curve,
        defaults=dict(degree=2, tableau="sdirk3", h=0.35, dt=0.005, delta=0.8, bigR=3,
                      projector="interp"))


def flower_demo(t_final=0.06):
    """Oscillating ten-lobed domain; same forcing as the 2D benchmark, no exact solution."""
    d = stefan_2d_data()
    r0 = d.r0

    def initial(x):
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1)
        theta = np.arctan2(x[..., 1], x[..., 0])
        return bessel_j0(10.0 * r0 * r / (10.0 + np.cos(10.0 * theta)))

    return ProblemDefinition(
        name="flower", dim=2, forcing=d.forcing, initial=initial,
        t_start=0.0, t_final=t_final, curve=flower(),
        defaults=dict(degree=2, tableau="sdirk3", h=0.04375, dt=0.000625, delta=0.8, bigR=3,
                      projector="interp"))


PROBLEMS = {"stefan1d": stefan_1d, "stefan2d": stefan_2d, "flower": flower_demo}


def get_problem(name, **kw):
    try:
        return PROBLEMS[name](**kw)
    except KeyError:
        raise ValueError(f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}") from None
