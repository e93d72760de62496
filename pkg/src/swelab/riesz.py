"""Closed-form covariance calculus for the wave equation driven by Riesz noise.

The noise is white in time and has spatial covariance ``|x - y|**-beta``.  The
mild solution is ``u(t, x) = W(cone(t, x)) / 2`` where ``cone(t, x)`` is the
backward light cone.  Every covariance in this module is an integral over the
time axis of the Riesz energy of two segments (the time slices of the regions
involved), which is evaluated exactly.

Rotated coordinates: ``tau = (t - x)/sqrt(2)``, ``lam = (t + x)/sqrt(2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np

from . import kernels
from .errors import DomainError, PreconditionError, SwelabError

SQRT2 = math.sqrt(2.0)

Band = Optional[Tuple[float, float]]


def c_beta_forms(beta: float) -> Tuple[float, float]:
    """The spectral constant via the Fourier-pair form and the sine form."""
    fourier = math.sqrt(math.pi) * 2.0 ** (1.0 - beta) * math.gamma(0.5 - beta / 2.0) / math.gamma(beta / 2.0)
    sine = 2.0 * math.gamma(2.0 - beta) * math.sin(math.pi * beta / 2.0) / (1.0 - beta)
    return fourier, sine


@dataclass(frozen=True)
class ModelParams:
    beta: float
    c_beta: float
    k_beta: float

    @property
    def hurst(self) -> float:
        """Hurst index of the fixed-tau cross-sections, (2 - beta)/2."""
        return (2.0 - self.beta) / 2.0

    @property
    def energy_norm(self) -> float:
        return 1.0 / ((2.0 - self.beta) * (1.0 - self.beta))


def make_params(beta: float) -> ModelParams:
    """Validate ``beta`` and derive the spectral and LIL constants."""
    try:
        beta = float(beta)
    except (TypeError, ValueError):
        raise DomainError(f"beta must be a real number in the open interval (0, 1), got {beta!r}") from None
    if not (0.0 < beta < 1.0):
        raise DomainError(f"beta must lie in the open interval (0, 1), got {beta}")
    fourier, sine = c_beta_forms(beta)
    if abs(fourier - sine) > 1e-12 * abs(sine):
        raise SwelabError(f"C_beta closed forms disagree at beta={beta}: {fourier!r} vs {sine!r}")
    k_sq = 2.0 ** ((1.0 - beta) / 2.0) / ((2.0 - beta) * (1.0 - beta))
    return ModelParams(beta=beta, c_beta=fourier, k_beta=math.sqrt(k_sq))


# ---------------------------------------------------------------------------
# Geometry
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PlanePoint:
    t: float
    x: float

    @property
    def tau(self) -> float:
        return (self.t - self.x) / SQRT2

    @property
    def lam(self) -> float:
        return (self.t + self.x) / SQRT2

    @classmethod
    def from_tx(cls, t: float, x: float) -> "PlanePoint":
        if t < 0:
            raise DomainError(f"time must be non-negative, got t={t}")
        return cls(float(t), float(x))

    @classmethod
    def from_rotated(cls, tau: float, lam: float) -> "PlanePoint":
        if tau < 0 or lam < 0:
            raise DomainError(f"rotated coordinates must be non-negative, got ({tau}, {lam})")
        return cls((tau + lam) / SQRT2, (lam - tau) / SQRT2)


def to_rotated(t, x):
    return (np.asarray(t) - np.asarray(x)) / SQRT2, (np.asarray(t) + np.asarray(x)) / SQRT2


def from_rotated(tau, lam):
    return (np.asarray(tau) + np.asarray(lam)) / SQRT2, (np.asarray(lam) - np.asarray(tau)) / SQRT2


@dataclass(frozen=True)
class Segment:
    a: float
    b: float

    def __post_init__(self):
        if self.a > self.b:
            raise DomainError(f"segment endpoints out of order: [{self.a}, {self.b}]")

    @property
    def length(self) -> float:
        return self.b - self.a


def _check_band(band: Band) -> Band:
    if band is None:
        return None
    lo, hi = float(band[0]), float(band[1])
    if not (0.0 <= lo < hi):
        raise DomainError(f"time band must satisfy 0 <= lo < hi, got [{lo}, {hi})")
    return (lo, hi)


@dataclass(frozen=True)
class LightCone:
    """Backward light cone of ``apex``, optionally cut to ``lo <= s < hi``."""

    apex: PlanePoint
    time_band: Band = None

    def __post_init__(self):
        object.__setattr__(self, "time_band", _check_band(self.time_band))

    def slice_at(self, s: float) -> Optional[Segment]:
        t, x = self.apex.t, self.apex.x
        if s < 0 or s > t:
            return None
        if self.time_band is not None and not (self.time_band[0] <= s < self.time_band[1]):
            return None
        return Segment(x - (t - s), x + (t - s))

    def s_range(self) -> Tuple[float, float]:
        lo, hi = (0.0, math.inf) if self.time_band is None else self.time_band
        return max(lo, 0.0), min(hi, self.apex.t)


# ---------------------------------------------------------------------------
# Segment energies
# ---------------------------------------------------------------------------


def _riesz_f(u, p):
    return np.abs(u) ** p


def segment_cross_energy(p: ModelParams, s1: Segment, s2: Segment) -> float:
    """Double integral of |y - y'|^-beta over s1 x s2."""
    e = 2.0 - p.beta
    a, b, c, d = s1.a, s1.b, s2.a, s2.b
    val = abs(c - b) ** e + abs(d - a) ** e - abs(c - a) ** e - abs(d - b) ** e
    return val * p.energy_norm


def segment_spectral_energy(p: ModelParams, s1: Segment, s2: Segment) -> float:
    """C_beta * int F1_{s1}(xi) conj(F1_{s2}(xi)) |xi|^(beta-1) d xi."""
    return 2.0 * math.pi * segment_cross_energy(p, s1, s2)


# ---------------------------------------------------------------------------
# Slice regions: unions over s of one segment [a0 + a1*s, b0 + b1*s]
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Piece:
    s0: float
    s1: float
    a0: float
    a1: float
    b0: float
    b1: float


Region = Tuple[Piece, ...]


def _clip_piece(s0, s1, a0, a1, b0, b1, band: Band):
    lo, hi = (0.0, math.inf) if band is None else band
    s0, s1 = max(s0, lo, 0.0), min(s1, hi)
    if s1 <= s0:
        return ()
    return (Piece(s0, s1, a0, a1, b0, b1),)


def cone_region(cone: LightCone) -> Region:
    t, x = cone.apex.t, cone.apex.x
    return _clip_piece(0.0, t, x - t, 1.0, x + t, -1.0, cone.time_band)


def lambda_increment_region(tau: float, lam1: float, lam2: float, band: Band = None) -> Region:
    """Region whose noise mass is 2*(u~(tau, lam2) - u~(tau, lam1)), lam1 <= lam2."""
    if lam2 < lam1:
        raise DomainError("lambda increment needs lam1 <= lam2")
    t1 = (tau + lam1) / SQRT2
    t2 = (tau + lam2) / SQRT2
    return _clip_piece(0.0, t1, SQRT2 * lam1, -1.0, SQRT2 * lam2, -1.0, band) + _clip_piece(
        t1, t2, -SQRT2 * tau, 1.0, SQRT2 * lam2, -1.0, band
    )


def tau_increment_region(lam: float, tau1: float, tau2: float, band: Band = None) -> Region:
    """Region whose noise mass is 2*(u~(tau2, lam) - u~(tau1, lam)), tau1 <= tau2."""
    if tau2 < tau1:
        raise DomainError("tau increment needs tau1 <= tau2")
    t1 = (tau1 + lam) / SQRT2
    t2 = (tau2 + lam) / SQRT2
    return _clip_piece(0.0, t1, -SQRT2 * tau2, 1.0, -SQRT2 * tau1, 1.0, band) + _clip_piece(
        t1, t2, -SQRT2 * tau2, 1.0, SQRT2 * lam, -1.0, band
    )


def _int_power(u0, k, lo, hi, e):
    # int_lo^hi |u0 + k s|^e ds
    if k == 0.0:
        return abs(u0) ** e * (hi - lo)
    q = e + 1.0
    uh, ul = u0 + k * hi, u0 + k * lo
    return (math.copysign(abs(uh) ** q, uh) - math.copysign(abs(ul) ** q, ul)) / (q * k)


def region_covariance(p: ModelParams, r1: Region, r2: Region) -> float:
    """Cov of W(r1)/2 and W(r2)/2."""
    e = 2.0 - p.beta
    total = 0.0
    for P in r1:
        for Q in r2:
            lo, hi = max(P.s0, Q.s0), min(P.s1, Q.s1)
            if hi <= lo:
                continue
            total += (
                _int_power(Q.a0 - P.b0, Q.a1 - P.b1, lo, hi, e)
                + _int_power(Q.b0 - P.a0, Q.b1 - P.a1, lo, hi, e)
                - _int_power(Q.a0 - P.a0, Q.a1 - P.a1, lo, hi, e)
                - _int_power(Q.b0 - P.b0, Q.b1 - P.b1, lo, hi, e)
            )
    return 0.25 * total * p.energy_norm


# ---------------------------------------------------------------------------
# Field covariances
# ---------------------------------------------------------------------------


def _band_intersection(A: LightCone, B: LightCone) -> Tuple[float, float]:
    lo, hi = 0.0, math.inf
    for band in (A.time_band, B.time_band):
        if band is not None:
            lo, hi = max(lo, band[0]), min(hi, band[1])
    return lo, hi


def field_covariance(p: ModelParams, A: LightCone, B: LightCone) -> float:
    """Cov(u_A, u_B) where u_C = W(C)/2 for (possibly banded) light cones."""
    lo, hi = _band_intersection(A, B)
    val = kernels.cone_covariance_numpy(A.apex.t, A.apex.x, B.apex.t, B.apex.x, lo, hi, p.beta)
    return float(val)


def rotated_cone(tau: float, lam: float, band: Band = None) -> LightCone:
    return LightCone(PlanePoint.from_rotated(tau, lam), band)


def rotated_covariance(p: ModelParams, a: Tuple[float, float], b: Tuple[float, float], band: Band = None) -> float:
    return field_covariance(p, rotated_cone(*a, band), rotated_cone(*b, band))


def increment_variance_threeterm(p: ModelParams, tau: float, lam: float, h: float, band: Band = None) -> float:
    """Var(u~(tau, lam+h) - u~(tau, lam)) assembled from three cone covariances."""
    a, b = (tau, lam), (tau, lam + h)
    return rotated_covariance(p, a, a, band) + rotated_covariance(p, b, b, band) - 2.0 * rotated_covariance(p, a, b, band)


def increment_variance(p: ModelParams, tau: float, lam: float, h: float) -> float:
    """Variance of the lambda-increment of u~ over (lam, lam + h] at fixed tau."""
    if tau < 0 or lam < 0 or h < 0:
        raise DomainError(f"increment_variance needs tau, lam, h >= 0, got ({tau}, {lam}, {h})")
    if h == 0:
        return 0.0
    b = p.beta
    return 0.5 * p.k_beta**2 * ((tau + lam) * h ** (2.0 - b) + h ** (3.0 - b) / (3.0 - b))


def increment_covariance(
    p: ModelParams, tau: float, inc1: Tuple[float, float], inc2: Tuple[float, float], band: Band = None
) -> float:
    """Cov of two lambda-increments of u~ at the same tau, computed region-wise.

    Stable at small lags where differencing cone covariances would cancel.
    """
    return region_covariance(
        p, lambda_increment_region(tau, *inc1, band), lambda_increment_region(tau, *inc2, band)
    )


def rectangle_increment_variance(p: ModelParams, tau: float, tau2: float, lam: float, h: float) -> float:
    """Variance of the rectangular increment of u~ over (tau, tau2] x (lam, lam + h].

    Valid while h <= tau2 - tau; the result does not depend on ``lam``.
    """
    if h == 0:
        return 0.0
    if not (0.0 <= tau < tau2) or lam <= 0 or h < 0:
        raise DomainError(f"rectangle needs 0 <= tau < tau2, lam > 0, h > 0; got ({tau}, {tau2}, {lam}, {h})")
    if h > tau2 - tau:
        raise PreconditionError(
            f"h={h} exceeds tau2 - tau={tau2 - tau}; use rectangle_increment_variance_fourpoint"
        )
    b = p.beta
    return 0.5 * p.k_beta**2 * h ** (2.0 - b) * ((tau2 - tau) - (1.0 - b) / (3.0 - b) * h)


def rectangle_increment_variance_fourpoint(p: ModelParams, tau: float, tau2: float, lam: float, h: float) -> float:
    pts = [(tau2, lam + h), (tau, lam + h), (tau2, lam), (tau, lam)]
    w = np.array([1.0, -1.0, -1.0, 1.0])
    t, x = from_rotated([q[0] for q in pts], [q[1] for q in pts])
    C = kernels.cone_covariance_numpy(t[:, None], x[:, None], t[None, :], x[None, :], 0.0, math.inf, p.beta)
    return float(w @ C @ w)


def dyadic_increment_correlation(p: ModelParams, tau: float, lam: float, q: float, j: int, k: int) -> float:
    """Correlation of the increments over (lam + q^-(n+1), lam + q^-n] for n = j, k."""
    if q <= 1:
        raise DomainError(f"q must exceed 1, got {q}")
    if j == k:
        return 1.0
    incs = [(lam + q ** -(n + 1), lam + q**-n) for n in (j, k)]
    cjk = increment_covariance(p, tau, incs[0], incs[1])
    vj = increment_covariance(p, tau, incs[0], incs[0])
    vk = increment_covariance(p, tau, incs[1], incs[1])
    return cjk / math.sqrt(vj * vk)


def dyadic_increment_covariance(p: ModelParams, tau: float, lam: float, q: float, j: int, k: int) -> float:
    incs = [(lam + q ** -(n + 1), lam + q**-n) for n in (j, k)]
    return increment_covariance(p, tau, incs[0], incs[1])


# ---------------------------------------------------------------------------
# Time-truncated components
# ---------------------------------------------------------------------------


def split_time(tau0: float) -> float:
    """Time level s = tau0/sqrt(2) separating u~_1 (below) from u~_2 (above)."""
    return tau0 / SQRT2


def early_band(tau0: float) -> Tuple[float, float]:
    return (0.0, split_time(tau0))


def late_band(tau0: float) -> Tuple[float, float]:
    return (split_time(tau0), math.inf)


def v1_coefficient(p: ModelParams, tau0: float) -> float:
    b = p.beta
    return 2.0 ** (-(3.0 + b) / 2.0) * tau0 / ((2.0 - b) * (1.0 - b))


def v1_crosssection_covariance(p: ModelParams, tau0: float, lam: float, lam2: float) -> float:
    """Cov of v~_1(tau0, lam) = u~_1(tau0, lam) - u~_1(tau0, 0) at two lambdas."""
    if tau0 <= 0:
        raise DomainError(f"tau0 must be positive, got {tau0}")
    if lam < 0 or lam2 < 0:
        raise DomainError("lambda values must be non-negative")
    e = 2.0 - p.beta
    return v1_coefficient(p, tau0) * (lam**e + lam2**e - abs(lam - lam2) ** e)


def v1_crosssection_covariance_banded(p: ModelParams, tau0: float, lam: float, lam2: float) -> float:
    """Same quantity from four early-band cone covariances."""
    band = early_band(tau0)

    def c(a, b):
        return rotated_covariance(p, (tau0, a), (tau0, b), band)

    return c(lam, lam2) - c(lam, 0.0) - c(0.0, lam2) + c(0.0, 0.0)


def v1_unit_scale(p: ModelParams, tau0: float) -> float:
    """Standard deviation of v~_1 at unit lag; its inverse rescales v~_1 to standard fBm."""
    return math.sqrt(2.0 * v1_coefficient(p, tau0))


def shift_invariance_residual(p: ModelParams, tau0: float, grid: Iterable[Tuple[float, float]]) -> float:
    """Max |Cov(u~_2(tau0 + .)) - Cov(u~(.))| over a list of (tau, lam) points."""
    pts = np.asarray(list(grid), dtype=float).reshape(-1, 2)
    if pts.shape[0] == 0:
        return 0.0
    if tau0 <= 0:
        raise DomainError(f"tau0 must be positive, got {tau0}")
    if np.any(pts < 0):
        raise DomainError("grid coordinates must be non-negative")
    t2, x2 = from_rotated(pts[:, 0] + tau0, pts[:, 1])
    t, x = from_rotated(pts[:, 0], pts[:, 1])
    lo, hi = late_band(tau0)
    shifted = kernels.cone_covariance_matrix(t2, x2, lo, hi, p.beta, backend="numpy")
    plain = kernels.cone_covariance_matrix(t, x, 0.0, math.inf, p.beta, backend="numpy")
    return float(np.max(np.abs(shifted - plain)))


def canonical_metric(p: ModelParams, P: PlanePoint, Q: PlanePoint) -> float:
    """sqrt(E[(u(P) - u(Q))^2])."""
    A, B = LightCone(P), LightCone(Q)
    var = field_covariance(p, A, A) + field_covariance(p, B, B) - 2.0 * field_covariance(p, A, B)
    return math.sqrt(max(var, 0.0))


def fitted_decay_constant(
    p: ModelParams, tau: float, lam: float, q: float, pairs: Sequence[Tuple[int, int]]
) -> float:
    """Smallest C0 with r_jk <= C0 * q^(-(k-j) beta/2) over the given (j, k) pairs."""
    worst = 0.0
    for j, k in pairs:
        r = dyadic_increment_correlation(p, tau, lam, q, j, k)
        worst = max(worst, r * q ** ((k - j) * p.beta / 2.0))
    return worst
