"""Adaptive-quadrature oracles for the closed forms in :mod:`swelab.riesz`.

Nothing here reuses the antiderivatives behind the closed forms: segment
energies are nested 1-D adaptive quadratures of the singular kernel, cone
covariances integrate slice energies over the time axis numerically, and the
spectral form integrates the Fourier side directly.
"""

from __future__ import annotations

import math
import warnings
from typing import Sequence, Tuple

import numpy as np
from scipy import integrate

from . import riesz

_TIGHT = dict(epsabs=1e-13, epsrel=1e-12, limit=200)


def _quiet(func):
    """Silence QUADPACK roundoff warnings: they fire once the requested
    tolerance sits below what double precision can certify."""

    def wrapper(*args, **kwargs):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            return func(*args, **kwargs)

    wrapper.__name__ = func.__name__
    wrapper.__doc__ = func.__doc__
    return wrapper


def _one(z):
    return 1.0


@_quiet
def segment_energy_quad(beta: float, s1: Tuple[float, float], s2: Tuple[float, float]) -> float:
    """int_{s1} int_{s2} |y - y'|^-beta dy' dy by nested adaptive quadrature."""
    a, b = s1
    c, d = s2
    if b <= a or d <= c:
        return 0.0

    def inner(y):
        # the kernel singularity at z = y becomes an algebraic endpoint weight (QAWS)
        if y < c or y > d:
            return integrate.quad(lambda z: abs(y - z) ** -beta, c, d, **_TIGHT)[0]
        total = 0.0
        if y > c:
            total += integrate.quad(_one, c, y, weight="alg", wvar=(0.0, -beta), **_TIGHT)[0]
        if y < d:
            total += integrate.quad(_one, y, d, weight="alg", wvar=(-beta, 0.0), **_TIGHT)[0]
        return total

    pts = [p for p in (c, d) if a < p < b]
    val, _ = integrate.quad(inner, a, b, points=pts or None, **_TIGHT)
    return val


@_quiet
def spectral_energy(beta: float, s1: Tuple[float, float], s2: Tuple[float, float], split: float = 50.0) -> float:
    """C_beta int F(1_{s1}) conj F(1_{s2}) |xi|^(beta-1) d xi, integrated on the Fourier side.

    Equals 2 pi times the segment energy.
    """
    a, b = s1
    c, d = s2
    if b <= a or d <= c:
        return 0.0
    c_beta = riesz.c_beta_forms(beta)[1]
    terms = [(b - d, 1.0), (b - c, -1.0), (a - d, -1.0), (a - c, 1.0)]

    def near(xi):
        if xi == 0.0:
            return 0.0
        # Re[(e^{i xi b} - e^{i xi a}) (e^{-i xi d} - e^{-i xi c})] / xi^2 * xi^(beta - 1)
        s = sum(w * math.cos(xi * u) for u, w in terms)
        return s * xi ** (beta - 3.0)

    # near zero the bracket is O(xi^2); a series keeps it stable
    def near_stable(xi):
        if xi < 1e-4:
            s = sum(-w * (u * u) / 2.0 + w * (u**4) * xi * xi / 24.0 for u, w in terms)
            return s * xi ** (beta - 1.0)
        return near(xi)

    body, _ = integrate.quad(near_stable, 0.0, split, limit=2000, epsabs=1e-13, epsrel=1e-12)
    tail = 0.0
    for u, w in terms:
        if u == 0.0:
            tail += w * split ** (beta - 2.0) / (2.0 - beta)
        else:
            val, _ = integrate.quad(lambda xi: xi ** (beta - 3.0), split, np.inf, weight="cos", wvar=abs(u))
            tail += w * val
    return 2.0 * c_beta * (body + tail)


def _slice(t: float, x: float, s: float) -> Tuple[float, float]:
    return (x - (t - s), x + (t - s))


@_quiet
def cone_covariance_quad(beta: float, A: Tuple[float, float], B: Tuple[float, float], band=None) -> float:
    """1/4 int E(slice_A(s), slice_B(s)) ds by adaptive quadrature in s."""
    p = riesz.make_params(beta)
    (ta, xa), (tb, xb) = A, B
    lo, hi = (0.0, math.inf) if band is None else band
    s0, s1 = max(lo, 0.0), min(ta, tb, hi)
    if s1 <= s0:
        return 0.0

    def f(s):
        return riesz.segment_cross_energy(
            p, riesz.Segment(*_slice(ta, xa, s)), riesz.Segment(*_slice(tb, xb, s))
        )

    # kinks where slice endpoints meet
    cand = [((xb - tb) - (xa + ta)) / -2.0, ((xb + tb) - (xa - ta)) / 2.0]
    pts = [c for c in cand if s0 < c < s1]
    val, _ = integrate.quad(f, s0, s1, points=pts or None, **_TIGHT)
    return 0.25 * val


def rotated_cov_quad(beta: float, a: Tuple[float, float], b: Tuple[float, float], band=None) -> float:
    ta, xa = riesz.from_rotated(*a)
    tb, xb = riesz.from_rotated(*b)
    return cone_covariance_quad(beta, (float(ta), float(xa)), (float(tb), float(xb)), band)


def combination_quad(beta: float, points: Sequence[Tuple[float, float]], weights: Sequence[float], band=None) -> float:
    """Variance of sum_i w_i u~(points_i) from quadrature covariances."""
    n = len(points)
    total = 0.0
    for i in range(n):
        for j in range(i, n):
            c = rotated_cov_quad(beta, points[i], points[j], band)
            total += weights[i] * weights[j] * c * (1.0 if i == j else 2.0)
    return total


def increment_variance_quad(beta: float, tau: float, lam: float, h: float) -> float:
    return combination_quad(beta, [(tau, lam + h), (tau, lam)], [1.0, -1.0])


def rectangle_variance_quad(beta: float, tau: float, tau2: float, lam: float, h: float) -> float:
    pts = [(tau2, lam + h), (tau, lam + h), (tau2, lam), (tau, lam)]
    return combination_quad(beta, pts, [1.0, -1.0, -1.0, 1.0])


def v1_covariance_quad(beta: float, tau0: float, lam: float, lam2: float) -> float:
    band = riesz.early_band(tau0)

    def c(x, y):
        return rotated_cov_quad(beta, (tau0, x), (tau0, y), band)

    return c(lam, lam2) - c(lam, 0.0) - c(0.0, lam2) + c(0.0, 0.0)


def gamma_series_check(beta: float) -> float:
    """Relative gap between the two closed forms of C_beta."""
    f, s = riesz.c_beta_forms(beta)
    return abs(f - s) / abs(s)
