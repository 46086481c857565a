"""Bessel functions J0/J1, the exponential integral Ei and its inverse.

Only real arguments are supported. Everything is vectorized over numpy
arrays except :func:`ei_inverse`, which works on scalars.
"""
import math

import numpy as np

from .errors import OutOfBranch

# Euler-Mascheroni constant (OEIS A001620), 20 significant digits.
EULER_GAMMA = 0.57721566490153286061

_SERIES_MAX = 4.0
_ASYMPTOTIC_MIN = 25.0


def _j01_series(x):
    # Ascending series; the alternating terms stay below ~4 for |x| <= 4.
    q = -0.25 * x * x
    t0 = np.ones_like(x)
    t1 = 0.5 * x
    s0 = t0.copy()
    s1 = t1.copy()
    for k in range(1, 40):
        t0 = t0 * q / (k * k)
        t1 = t1 * q / (k * (k + 1))
        s0 += t0
        s1 += t1
    return s0, s1


def _j01_miller(x):
    # Backward recurrence normalized by J0 + 2*sum(J_2k) = 1.
    n_start = 2 * ((int(np.max(x)) + 40) // 2)
    j_above = np.zeros_like(x)
    j_here = np.full_like(x, 1e-300)
    norm = 2.0 * j_here
    j1 = np.zeros_like(x)
    for n in range(n_start, 0, -1):
        j_below = 2.0 * n / x * j_here - j_above
        j_above, j_here = j_here, j_below
        m = n - 1
        if m == 1:
            j1 = j_here.copy()
        elif m > 0 and m % 2 == 0:
            norm = norm + 2.0 * j_here
        big = np.abs(j_here) > 1e250
        if np.any(big):
            scale = np.where(big, 1e-250, 1.0)
            j_here, j_above = j_here * scale, j_above * scale
            norm, j1 = norm * scale, j1 * scale
    norm = norm + j_here
    return j_here / norm, j1 / norm


def _j01_asymptotic(x):
    # Hankel expansion; accurate to ~1e-16 once x exceeds 25.
    def pq(nu):
        mu = 4.0 * nu * nu
        p = np.ones_like(x)
        q = np.zeros_like(x)
        term = np.ones_like(x)
        z8 = 8.0 * x
        for k in range(1, 30):
            term = term * (mu - (2 * k - 1) ** 2) / (k * z8)
            if k % 2 == 1:
                q += term if (k // 2) % 2 == 0 else -term
            else:
                p += -term if (k // 2) % 2 == 1 else term
        return p, q

    amp = np.sqrt(2.0 / (np.pi * x))
    p0, q0 = pq(0.0)
    p1, q1 = pq(1.0)
    chi0 = x - 0.25 * np.pi
    chi1 = x - 0.75 * np.pi
    return (amp * (p0 * np.cos(chi0) - q0 * np.sin(chi0)),
            amp * (p1 * np.cos(chi1) - q1 * np.sin(chi1)))


def _j01(z):
    z = np.asarray(z, dtype=float)
    x = np.abs(z)
    j0 = np.empty_like(x)
    j1 = np.empty_like(x)
    small = x <= _SERIES_MAX
    large = x >= _ASYMPTOTIC_MIN
    mid = ~(small | large)
    if np.any(small):
        j0[small], j1[small] = _j01_series(x[small])
    if np.any(mid):
        j0[mid], j1[mid] = _j01_miller(x[mid])
    if np.any(large):
        j0[large], j1[large] = _j01_asymptotic(x[large])
    j1 = np.where(z < 0, -j1, j1)
    return j0, j1


def bessel_j0(z):
    """Bessel function of the first kind of order zero."""
    j0, _ = _j01(z)
    return j0 if np.ndim(z) else float(j0)


def bessel_j1(z):
    """Bessel function of the first kind of order one."""
    _, j1 = _j01(z)
    return j1 if np.ndim(z) else float(j1)


def bessel_j0_prime(z):
    """Derivative of J0, which equals -J1."""
    return -bessel_j1(z)


def j0_first_root():
    """Smallest positive zero of J0, polished by Newton's method."""
    r = 2.404825557695773
    for _ in range(5):
        r += bessel_j0(r) / bessel_j1(r)
    return r


def _e1_continued_fraction(x):
    # E1(x) for x > 1 by the modified Lentz algorithm.
    b = x + 1.0
    c = 1.0 / 1e-300
    d = 1.0 / b
    h = d
    for i in range(1, 500):
        an = -float(i * i)
        b += 2.0
        d = 1.0 / (an * d + b)
        c = b + an / c
        delta = c * d
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return h * math.exp(-x)


def _ei_scalar(z):
    if z == 0.0:
        return -math.inf
    if -5.0 <= z <= 40.0:
        term = 1.0
        total = 0.0
        for k in range(1, 200):
            term *= z / k
            contrib = term / k
            total += contrib
            if abs(contrib) < 1e-17 * abs(total):
                break
        return EULER_GAMMA + math.log(abs(z)) + total
    if z < 0.0:
        return -_e1_continued_fraction(-z)
    # asymptotic series for large positive z
    term = 1.0
    total = 1.0
    for k in range(1, 40):
        new = term * k / z
        if abs(new) > abs(term):
            break
        term = new
        total += term
    return math.exp(z) / z * total


def exp_integral_ei(z):
    """Exponential integral Ei(z) = -int_{-z}^inf exp(-s)/s ds, real z != 0."""
    if np.ndim(z) == 0:
        return _ei_scalar(float(z))
    return np.vectorize(_ei_scalar, otypes=[float])(z)


def ei_inverse(y, tol=1e-13):
    """Inverse of Ei restricted to the negative half-line.

    Ei is a decreasing bijection from (-inf, 0) onto (-inf, 0), so any y < 0
    has exactly one preimage there.
    """
    y = float(y)
    if not y < 0.0:
        raise OutOfBranch(f"Ei^-1 undefined on the negative branch for y={y!r}")
    # bracket: Ei(lo) >= y >= Ei(hi), lo < hi < 0
    lo, hi = -1.0, -0.5
    while _ei_scalar(lo) < y:
        lo *= 2.0
    while _ei_scalar(hi) > y:
        hi *= 0.5
    z = 0.5 * (lo + hi)
    for _ in range(200):
        r = _ei_scalar(z) - y
        if abs(r) <= tol * max(1.0, abs(y)):
            return z
        if r > 0.0:
            lo = z
        else:
            hi = z
        step = r / (math.exp(z) / z)
        z_new = z - step
        if not lo < z_new < hi:
            z_new = 0.5 * (lo + hi)
        z = z_new
    raise OutOfBranch(f"Ei^-1 did not converge for y={y!r}")
