"""Scalar Gaussian utilities: tails, bivariate orthants, Slepian identity, rate probes."""

from __future__ import annotations

import math
from typing import Dict, List, Sequence

import numpy as np
from scipy import integrate, optimize, special

from .errors import DomainError
from .sampler import CovMatrix, sample_values

FD_STEP = 1e-4
DERIVATIVE_TOL = 1e-5
RSTAR_TOL = 1e-9
_X_MAX = 40.0
_QUAD = dict(epsabs=1e-14, epsrel=1e-13, limit=400)


def gaussian_survival(x: float) -> float:
    """P(Z > x) for a standard normal Z."""
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def gaussian_density(x: float) -> float:
    return math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


def tail_lower_bound(x: float) -> float:
    """(2 sqrt(2 pi))^-1 x^-1 exp(-x^2/2), a lower bound on P(Z > x) for x > 1."""
    return math.exp(-0.5 * x * x) / (2.0 * math.sqrt(2.0 * math.pi) * x)


def _check_r(r: float):
    if not (-1.0 < r < 1.0):
        raise DomainError(f"correlation must satisfy |r| < 1, got {r}")


def bivariate_density(x: float, y: float, r: float) -> float:
    _check_r(r)
    d = 1.0 - r * r
    return math.exp(-(x * x - 2.0 * r * x * y + y * y) / (2.0 * d)) / (2.0 * math.pi * math.sqrt(d))


def bivariate_upper_orthant(g1: float, g2: float, r: float) -> float:
    """P(Z1 > g1, Z2 > g2) for standard normals with correlation r.

    Conditions on Z1: int_{g1}^inf phi(x) P(Z > (g2 - r x)/sqrt(1 - r^2)) dx.
    """
    _check_r(r)
    if r == 0.0:
        return gaussian_survival(g1) * gaussian_survival(g2)
    s = math.sqrt(1.0 - r * r)

    def integrand(x):
        return gaussian_density(x) * gaussian_survival((g2 - r * x) / s)

    # phi(x) underflows past |x| = 40, so the integral lives on [max(g1, -40), 40];
    # split where the conditional survival switches from ~0 to ~1 to help quad
    lo, hi = max(g1, -_X_MAX), _X_MAX
    if lo >= hi:
        return 0.0
    knot = g2 / r
    pts = [knot] if lo < knot < hi else None
    total, _ = integrate.quad(integrand, lo, hi, points=pts, **_QUAD)
    return min(max(total, 0.0), 1.0)


def orthant_at_zero(r: float) -> float:
    """Closed form P(Z1 > 0, Z2 > 0) = 1/4 + arcsin(r)/(2 pi)."""
    return 0.25 + math.asin(r) / (2.0 * math.pi)


def orthant_derivative_fd(g1: float, g2: float, r: float, step: float = FD_STEP) -> float:
    return (bivariate_upper_orthant(g1, g2, r + step) - bivariate_upper_orthant(g1, g2, r - step)) / (2.0 * step)


def _record(identity: str, inputs: dict, deviation: float, tolerance: float, **extra) -> Dict:
    rec = {
        "identity": identity,
        "inputs": inputs,
        "deviation": float(deviation),
        "tolerance": float(tolerance),
        "pass": bool(deviation <= tolerance),
    }
    rec.update(extra)
    return rec


def slepian_identity_check(g1: float, g2: float, r: float, step: float = FD_STEP) -> Dict:
    """Check d/dr P(Z1>g1, Z2>g2) = g(g1, g2; r) and locate the mean-value point r*.

    r* in [0, r] solves p(r) - p(0) = r * g(g1, g2; r*).
    """
    if not (abs(r) < 0.99):
        raise DomainError(f"slepian check needs |r| < 0.99, got {r}")
    if not (g1 > 0 and g2 > 0):
        raise DomainError(f"slepian check needs g1, g2 > 0, got ({g1}, {g2})")
    inputs = {"g1": g1, "g2": g2, "r": r, "step": step}
    dens = bivariate_density(g1, g2, r)
    fd = orthant_derivative_fd(g1, g2, r, step)
    deriv_dev = abs(fd - dens)

    gap = bivariate_upper_orthant(g1, g2, r) - gaussian_survival(g1) * gaussian_survival(g2)
    r_star, residual, bracketed = _mean_value_point(g1, g2, r, gap)
    rstar_ok = bracketed and residual <= RSTAR_TOL
    return {
        "identity": "slepian_derivative",
        "inputs": inputs,
        "finite_difference": fd,
        "density": dens,
        "deviation": deriv_dev,
        "tolerance": DERIVATIVE_TOL,
        "r_star": r_star,
        "r_star_residual": residual,
        "r_star_tolerance": RSTAR_TOL,
        "bracketed": bracketed,
        "pass": bool(deriv_dev <= DERIVATIVE_TOL and rstar_ok),
    }


def _mean_value_point(g1, g2, r, gap):
    if r == 0.0:
        return 0.0, abs(gap), True

    def f(s):
        return r * bivariate_density(g1, g2, s) - gap

    grid = np.linspace(0.0, r, 257)
    vals = np.array([f(s) for s in grid])
    hits = np.flatnonzero(vals == 0.0)
    if hits.size:
        s = float(grid[hits[0]])
        return s, abs(f(s)), True
    change = np.flatnonzero(np.sign(vals[:-1]) != np.sign(vals[1:]))
    if change.size == 0:
        k = int(np.argmin(np.abs(vals)))
        return float(grid[k]), float(abs(vals[k])), False
    a, b = grid[change[0]], grid[change[0] + 1]
    s = optimize.brentq(f, min(a, b), max(a, b), xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    return float(s), float(abs(f(s))), True


def density_identity_check(x: float, y: float, r: float, step: float = FD_STEP, tol: float = DERIVATIVE_TOL) -> Dict:
    """Finite-difference check of d/dr g(x, y; r) = d^2/dxdy g(x, y; r)."""
    dr = (bivariate_density(x, y, r + step) - bivariate_density(x, y, r - step)) / (2.0 * step)
    dxy = (
        bivariate_density(x + step, y + step, r)
        - bivariate_density(x + step, y - step, r)
        - bivariate_density(x - step, y + step, r)
        + bivariate_density(x - step, y - step, r)
    ) / (4.0 * step * step)
    return _record("density_heat_identity", {"x": x, "y": y, "r": r, "step": step}, abs(dr - dxy), tol,
                   d_dr=dr, d_dxdy=dxy)


def exact_scalar_rate(gamma: float, variance: float = 1.0) -> float:
    """gamma^-2 log P(|Z| > gamma) for a single centered normal of given variance."""
    return (math.log(2.0) + float(special.log_ndtr(-gamma / math.sqrt(variance)))) / gamma**2


def large_deviation_rate_probe(
    m: CovMatrix, gammas: Sequence[float], seed: int, n_reps: int, chunk: int = 50_000, backend=None
) -> Dict:
    """Monte Carlo estimates of gamma^-2 log P(max_i |Z_i| > gamma)."""
    gammas = [float(g) for g in gammas]
    if any(b <= a for a, b in zip(gammas, gammas[1:])):
        raise DomainError("gammas must be strictly increasing")
    max_var = float(np.max(np.diag(m.entries))) if m.dim else 0.0
    if max_var <= 0:
        raise DomainError("rate probe needs a matrix with positive variance")
    counts = np.zeros(len(gammas), dtype=np.int64)
    g_arr = np.asarray(gammas)
    for start in range(0, n_reps, chunk):
        reps = np.arange(start, min(start + chunk, n_reps))
        sup = np.max(np.abs(sample_values(m, seed, reps, backend)), axis=1)
        counts += np.sum(sup[:, None] > g_arr[None, :], axis=0)
    limit = -1.0 / (2.0 * max_var)
    rows: List[Dict] = []
    for g, c in zip(gammas, counts):
        if c == 0:
            rows.append({"gamma": g, "count": 0, "p_hat": 0.0, "rate": None, "rate_se": None, "flagged": True})
            continue
        ph = c / n_reps
        se = math.sqrt((1.0 - ph) / (n_reps * ph)) / g**2
        rows.append({"gamma": g, "count": int(c), "p_hat": ph, "rate": math.log(ph) / g**2, "rate_se": se, "flagged": False})
    good = [row for row in rows if not row["flagged"]]
    dist = [abs(row["rate"] - limit) for row in good]
    monotone = all(b <= a for a, b in zip(dist, dist[1:]))
    within_error = all(
        b <= a + 3.0 * (ra["rate_se"] + rb["rate_se"]) for a, b, ra, rb in zip(dist, dist[1:], good, good[1:])
    )
    return {
        "limit": limit,
        "max_variance": max_var,
        "n_reps": n_reps,
        "seed": seed,
        "rows": rows,
        "monotone_toward_limit": monotone,
        "monotone_within_error": within_error,
    }
