import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from swelab import oracles, riesz
from swelab.errors import DomainError, PreconditionError

P5 = riesz.make_params(0.5)
betas = st.sampled_from([0.2, 0.5, 0.8])
coord = st.floats(0.0, 3.0, allow_nan=False)


def hp_c_beta(beta):
    mpmath.mp.dps = 40
    b = mpmath.mpf(beta)
    fourier = mpmath.sqrt(mpmath.pi) * 2 ** (1 - b) * mpmath.gamma((1 - b) / 2) / mpmath.gamma(b / 2)
    sine = 2 * mpmath.gamma(2 - b) * mpmath.sin(mpmath.pi * b / 2) / (1 - b)
    return fourier, sine


# -- parameters ---------------------------------------------------------------


def test_c_beta_half_is_sqrt_two_pi():
    assert P5.c_beta == pytest.approx(math.sqrt(2 * math.pi), rel=1e-14)
    assert P5.c_beta == pytest.approx(2.5066283, abs=1e-7)


@pytest.mark.parametrize("beta", [0.05, 0.1, 0.3, 0.5, 0.7, 0.9, 0.95])
def test_c_beta_matches_high_precision(beta):
    f, s = hp_c_beta(beta)
    assert abs(f - s) < mpmath.mpf(10) ** -30
    assert riesz.make_params(beta).c_beta == pytest.approx(float(f), rel=1e-13)


def test_k_beta_value():
    mpmath.mp.dps = 40
    k = mpmath.sqrt(mpmath.mpf(2) ** mpmath.mpf("0.25") / mpmath.mpf("0.75"))
    assert P5.k_beta == pytest.approx(float(k), rel=1e-15)
    assert P5.k_beta == pytest.approx(1.2592099, abs=1e-7)


@pytest.mark.parametrize("bad", [1.5, 0.0, 1.0, -0.2, float("nan"), "x", None])
def test_make_params_rejects_out_of_range(bad):
    with pytest.raises(DomainError, match=r"\(0, 1\)"):
        riesz.make_params(bad)


def test_hurst_and_norm():
    assert P5.hurst == 0.75
    assert P5.energy_norm == pytest.approx(1 / 0.75)


# -- geometry -----------------------------------------------------------------


@given(st.floats(0, 10), st.floats(0, 10))
def test_rotation_round_trip(tau, lam):
    pt = riesz.PlanePoint.from_rotated(tau, lam)
    assert pt.tau == pytest.approx(tau, abs=1e-14 * max(1, tau + lam))
    assert pt.lam == pytest.approx(lam, abs=1e-14 * max(1, tau + lam))
    back = riesz.PlanePoint.from_tx(pt.t, pt.x)
    assert back.t == pt.t and back.x == pt.x


def test_plane_point_domain():
    with pytest.raises(DomainError):
        riesz.PlanePoint.from_tx(-1, 0)
    with pytest.raises(DomainError):
        riesz.PlanePoint.from_rotated(-1, 0)


def test_segment_and_cone():
    with pytest.raises(DomainError):
        riesz.Segment(1, 0)
    assert riesz.Segment(2, 2).length == 0
    cone = riesz.LightCone(riesz.PlanePoint.from_tx(1.0, 0.5))
    assert cone.slice_at(0.25) == riesz.Segment(-0.25, 1.25)
    assert cone.slice_at(1.5) is None
    banded = riesz.LightCone(riesz.PlanePoint.from_tx(1.0, 0.5), (0.5, math.inf))
    assert banded.slice_at(0.25) is None
    assert banded.slice_at(0.75) == riesz.Segment(0.25, 0.75)
    for bad in [(0.5, 0.5), (-1, 2), (2, 1)]:
        with pytest.raises(DomainError):
            riesz.LightCone(riesz.PlanePoint.from_tx(1, 0), bad)


# -- segment energies ---------------------------------------------------------


def test_segment_energy_examples():
    seg = riesz.Segment
    assert riesz.segment_cross_energy(P5, seg(0, 0), seg(0, 0)) == 0.0
    assert riesz.segment_cross_energy(P5, seg(0, 1), seg(0, 1)) == pytest.approx(8 / 3, rel=1e-14)
    # quadrature oracle value, frozen
    assert riesz.segment_cross_energy(P5, seg(0, 1), seg(2, 3)) == pytest.approx(0.71906423095, rel=1e-10)
    assert oracles.segment_energy_quad(0.5, (0, 1), (2, 3)) == pytest.approx(0.71906423095, rel=1e-9)


@given(betas, coord, st.floats(0, 2), coord, st.floats(0, 2))
def test_segment_energy_symmetric_and_nonnegative_self(beta, a, la, c, lc):
    p = riesz.make_params(beta)
    s1, s2 = riesz.Segment(a, a + la), riesz.Segment(c, c + lc)
    e12 = riesz.segment_cross_energy(p, s1, s2)
    assert e12 == pytest.approx(riesz.segment_cross_energy(p, s2, s1), abs=1e-12)
    assert e12 >= -1e-12
    assert riesz.segment_cross_energy(p, s1, s1) >= 0


@given(betas, coord, st.floats(0.01, 2), coord, st.floats(0.01, 2), st.floats(0.1, 5))
def test_segment_energy_scaling(beta, a, la, c, lc, k):
    p = riesz.make_params(beta)
    base = riesz.segment_cross_energy(p, riesz.Segment(a, a + la), riesz.Segment(c, c + lc))
    scaled = riesz.segment_cross_energy(p, riesz.Segment(k * a, k * (a + la)), riesz.Segment(k * c, k * (c + lc)))
    assert scaled == pytest.approx(k ** (2 - beta) * base, rel=1e-9, abs=1e-12)


@pytest.mark.parametrize("beta", [0.2, 0.5, 0.8])
@pytest.mark.parametrize("s1,s2", [((0, 1), (0.5, 1.7)), ((-1, 0.2), (1.0, 1.1)), ((0, 2), (0.3, 0.9))])
def test_segment_energy_equals_spectral_integral(beta, s1, s2):
    p = riesz.make_params(beta)
    val = riesz.segment_spectral_energy(p, riesz.Segment(*s1), riesz.Segment(*s2))
    assert val == pytest.approx(oracles.spectral_energy(beta, s1, s2), rel=1e-7)


# -- field covariance ---------------------------------------------------------


def test_field_covariance_examples():
    A = riesz.LightCone(riesz.PlanePoint.from_tx(1.0, 0.0))
    Z = riesz.LightCone(riesz.PlanePoint.from_tx(0.0, 0.3))
    assert riesz.field_covariance(P5, Z, A) == 0.0
    var = riesz.field_covariance(P5, A, A)
    assert var == pytest.approx(2**0.5 / (0.5 * 1.5 * 2.5), rel=1e-14)
    assert var == pytest.approx(0.7542472, abs=1e-7)
    assert var == pytest.approx(oracles.cone_covariance_quad(0.5, (1, 0), (1, 0)), rel=1e-10)
    d = (riesz.rotated_covariance(P5, (1, 1), (1, 1)) + riesz.rotated_covariance(P5, (1, 1.25), (1, 1.25))
         - 2 * riesz.rotated_covariance(P5, (1, 1), (1, 1.25)))
    assert d == pytest.approx(0.2081112, abs=1e-7)


def _random_cones(rng, n):
    for _ in range(n):
        t1, t2 = rng.uniform(0.05, 2.0, 2)
        x1, x2 = rng.uniform(-1.5, 1.5, 2)
        band = None
        if rng.random() < 0.5:
            lo = rng.uniform(0, 1.0)
            band = (lo, lo + rng.uniform(0.1, 1.5))
        yield (t1, x1), (t2, x2), band


@pytest.mark.parametrize("beta", [0.2, 0.5, 0.8])
def test_field_covariance_matches_quadrature(beta):
    p = riesz.make_params(beta)
    rng = np.random.default_rng(11)
    for A, B, band in _random_cones(rng, 25):
        exact = riesz.field_covariance(p, riesz.LightCone(riesz.PlanePoint.from_tx(*A), band),
                                       riesz.LightCone(riesz.PlanePoint.from_tx(*B), band))
        ref = oracles.cone_covariance_quad(beta, A, B, band)
        assert exact == pytest.approx(ref, rel=1e-8, abs=1e-12)


@given(betas, st.floats(0, 2), st.floats(-1, 1), st.floats(0, 2), st.floats(-1, 1))
def test_field_covariance_symmetric(beta, t1, x1, t2, x2):
    p = riesz.make_params(beta)
    A = riesz.LightCone(riesz.PlanePoint.from_tx(t1, x1))
    B = riesz.LightCone(riesz.PlanePoint.from_tx(t2, x2))
    assert riesz.field_covariance(p, A, B) == pytest.approx(riesz.field_covariance(p, B, A), rel=1e-12, abs=1e-14)


@given(betas, st.floats(0.1, 2), st.floats(-1, 1), st.floats(0.1, 2), st.floats(-1, 1), st.floats(0.01, 2))
def test_time_bands_split_additively_and_disjoint_bands_vanish(beta, t1, x1, t2, x2, cut):
    p = riesz.make_params(beta)
    a, b = riesz.PlanePoint.from_tx(t1, x1), riesz.PlanePoint.from_tx(t2, x2)
    early, late = (0.0, cut), (cut, math.inf)
    full = riesz.field_covariance(p, riesz.LightCone(a), riesz.LightCone(b))
    parts = (riesz.field_covariance(p, riesz.LightCone(a, early), riesz.LightCone(b, early))
             + riesz.field_covariance(p, riesz.LightCone(a, late), riesz.LightCone(b, late)))
    assert parts == pytest.approx(full, rel=1e-9, abs=1e-12)
    assert riesz.field_covariance(p, riesz.LightCone(a, early), riesz.LightCone(b, late)) == 0.0


# -- increments ---------------------------------------------------------------


def test_increment_variance_examples():
    assert riesz.increment_variance(P5, 1, 1, 0) == 0.0
    assert riesz.increment_variance(P5, 1, 1, 0.25) == pytest.approx(0.2081112, abs=1e-7)
    # quadrature oracle value, frozen
    assert riesz.increment_variance(P5, 0, 1, 0.5) == pytest.approx(0.336358566101, rel=1e-10)
    assert riesz.increment_variance(P5, 1, 1, 0.25) == pytest.approx(oracles.increment_variance_quad(0.5, 1, 1, 0.25),
                                                                     rel=1e-9)
    for bad in [(-1, 1, 1), (1, -1, 1), (1, 1, -1)]:
        with pytest.raises(DomainError):
            riesz.increment_variance(P5, *bad)


@given(betas, st.floats(0, 3), st.floats(0, 3), st.floats(0, 1))
def test_increment_variance_equals_three_term(beta, tau, lam, h):
    p = riesz.make_params(beta)
    iv = riesz.increment_variance(p, tau, lam, h)
    assert iv == pytest.approx(riesz.increment_variance_threeterm(p, tau, lam, h), abs=1e-10)
    assert iv == pytest.approx(riesz.increment_covariance(p, tau, (lam, lam + h), (lam, lam + h)), abs=1e-12)


def test_tau_increment_mirrors_lambda_increment():
    # swapping tau and lam is a reflection x -> -x, which leaves the law invariant
    r1 = riesz.region_covariance(P5, riesz.tau_increment_region(1.3, 0.7, 0.95), riesz.tau_increment_region(1.3, 0.7, 0.95))
    assert r1 == pytest.approx(riesz.increment_variance(P5, 1.3, 0.7, 0.25), rel=1e-12)


def test_rectangle_examples():
    v = riesz.rectangle_increment_variance(P5, 0, 1, 1, 0.5)
    # four-point combination through quadrature covariances, frozen
    assert v == pytest.approx(0.25226892458, rel=1e-10)
    assert v == pytest.approx(oracles.rectangle_variance_quad(0.5, 0, 1, 1, 0.5), rel=1e-8)
    assert riesz.rectangle_increment_variance(P5, 0, 1, 1, 0.0) == 0.0
    a = riesz.rectangle_increment_variance_fourpoint(P5, 0, 1, 1, 0.5)
    b = riesz.rectangle_increment_variance_fourpoint(P5, 0, 1, 7, 0.5)
    assert a == pytest.approx(b, abs=1e-10)
    with pytest.raises(PreconditionError):
        riesz.rectangle_increment_variance(P5, 0, 1, 1, 1.5)


@given(betas, st.floats(0, 2), st.floats(0.05, 2), st.floats(0.01, 3), st.floats(0.01, 1))
def test_rectangle_matches_four_point(beta, tau, width, lam, frac):
    p = riesz.make_params(beta)
    h = width * frac
    v = riesz.rectangle_increment_variance(p, tau, tau + width, lam, h)
    assert v == pytest.approx(riesz.rectangle_increment_variance_fourpoint(p, tau, tau + width, lam, h), abs=1e-9)


def test_dyadic_correlation_properties():
    assert riesz.dyadic_increment_correlation(P5, 1, 1, 2, 3, 3) == 1.0
    pairs = [(j, k) for k in range(2, 13) for j in range(1, k)]
    c0 = riesz.fitted_decay_constant(P5, 1, 1, 2, pairs)
    r26 = riesz.dyadic_increment_correlation(P5, 1, 1, 2, 2, 6)
    assert 0 <= r26 <= c0 * 2 ** (-(6 - 2) * 0.25)
    for j in range(1, 6):
        vals = [riesz.dyadic_increment_correlation(P5, 1, 1, 2, j, k) for k in range(j + 2, 14)]
        assert all(0 <= v <= 1 for v in vals)
        assert all(b < a for a, b in zip(vals, vals[1:]))
    with pytest.raises(DomainError):
        riesz.dyadic_increment_correlation(P5, 1, 1, 1.0, 1, 2)


def test_region_covariance_matches_cone_differences():
    inc1, inc2 = (1 + 2**-3, 1 + 2**-2), (1 + 2**-7, 1 + 2**-6)
    direct = riesz.increment_covariance(P5, 1.0, inc1, inc2)

    def c(x, y):
        return riesz.rotated_covariance(P5, (1.0, x), (1.0, y))

    four = c(inc1[1], inc2[1]) - c(inc1[1], inc2[0]) - c(inc1[0], inc2[1]) + c(inc1[0], inc2[0])
    assert direct == pytest.approx(four, rel=1e-9)


# -- v1 cross-section and shift invariance -------------------------------------


def test_v1_examples():
    t0 = math.sqrt(2)
    assert riesz.v1_crosssection_covariance(P5, t0, 0, 0) == 0.0
    v = riesz.v1_crosssection_covariance(P5, t0, 1, 1)
    assert v == pytest.approx(1.1211952, abs=1e-7)
    assert v == pytest.approx(oracles.v1_covariance_quad(0.5, t0, 1, 1), rel=1e-9)
    assert riesz.v1_crosssection_covariance(P5, t0, 3 * 0.4, 3 * 0.9) == pytest.approx(
        3**1.5 * riesz.v1_crosssection_covariance(P5, t0, 0.4, 0.9), rel=1e-13)
    with pytest.raises(DomainError):
        riesz.v1_crosssection_covariance(P5, 0.0, 1, 1)


@given(betas, st.floats(0.1, 3), st.floats(0, 3), st.floats(0, 3))
def test_v1_closed_form_equals_banded(beta, t0, l1, l2):
    p = riesz.make_params(beta)
    assert riesz.v1_crosssection_covariance(p, t0, l1, l2) == pytest.approx(
        riesz.v1_crosssection_covariance_banded(p, t0, l1, l2), abs=1e-10)


def test_shift_invariance_examples():
    assert riesz.shift_invariance_residual(P5, 1.0, []) == 0.0
    grid = [(a, b) for a in (0, 0.5, 1) for b in (0, 0.5, 1)]
    assert riesz.shift_invariance_residual(P5, 1.0, grid) <= 1e-10
    p8 = riesz.make_params(0.8)
    assert riesz.shift_invariance_residual(p8, 0.3, [(0, 0.2), (0.4, 0.1), (1.0, 1.0), (0.3, 2.0)]) <= 1e-10


@given(betas, st.floats(0.05, 3), st.lists(st.tuples(st.floats(0, 2), st.floats(0, 2)), max_size=6))
def test_shift_invariance_property(beta, tau0, grid):
    assert riesz.shift_invariance_residual(riesz.make_params(beta), tau0, grid) <= 1e-10


def test_canonical_metric_equivalence_window():
    rng = np.random.default_rng(5)
    ratios = []
    for _ in range(1000):
        t, t2 = rng.uniform(1, 2, 2)
        x, x2 = rng.uniform(-1, 1, 2)
        d = abs(t - t2) + abs(x - x2)
        sig = riesz.canonical_metric(P5, riesz.PlanePoint.from_tx(t, x), riesz.PlanePoint.from_tx(t2, x2))
        ratios.append(sig / d ** 0.75)
    lo, hi = min(ratios), max(ratios)
    assert 0 < lo <= hi < math.inf
    assert 0.1 < lo and hi < 10
