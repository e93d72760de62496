"""Registry of closed-form-vs-oracle checks run by ``swelab selftest``."""

from __future__ import annotations

import math
from typing import Callable, Dict, List, Sequence

import numpy as np

from . import gaussian, oracles, riesz

Check = Dict


def _check(name: str, value: float, reference: float, tol: float, relative: bool = True, **inputs) -> Check:
    dev = abs(value - reference)
    if relative:
        dev /= max(abs(reference), 1e-300)
    return {
        "name": name,
        "inputs": inputs,
        "value": float(value),
        "reference": float(reference),
        "deviation": float(dev),
        "tolerance": tol,
        "relative": relative,
        "pass": bool(dev <= tol),
    }


def beta_checks(beta: float) -> List[Check]:
    p = riesz.make_params(beta)
    out = []
    f, s = riesz.c_beta_forms(beta)
    out.append(_check("c_beta_forms_agree", f, s, 1e-12, beta=beta))
    k_sq = 2.0 ** ((1.0 - beta) / 2.0) / ((2.0 - beta) * (1.0 - beta))
    out.append(_check("k_beta_squared", p.k_beta**2, k_sq, 1e-14, beta=beta))

    for s1, s2 in (((0.0, 1.0), (0.0, 1.0)), ((0.0, 1.0), (2.0, 3.0)), ((-0.3, 0.9), (0.4, 2.2))):
        val = riesz.segment_cross_energy(p, riesz.Segment(*s1), riesz.Segment(*s2))
        out.append(_check("segment_energy_vs_quadrature", val, oracles.segment_energy_quad(beta, s1, s2), 1e-8,
                          beta=beta, s1=s1, s2=s2))
    s1, s2 = (0.0, 1.0), (0.5, 1.7)
    val = riesz.segment_cross_energy(p, riesz.Segment(*s1), riesz.Segment(*s2))
    out.append(_check("segment_energy_vs_spectral", 2 * math.pi * val, oracles.spectral_energy(beta, s1, s2), 1e-7,
                      beta=beta, s1=s1, s2=s2))

    A = riesz.LightCone(riesz.PlanePoint.from_tx(1.0, 0.0))
    out.append(_check("cone_variance_vs_quadrature", riesz.field_covariance(p, A, A),
                      oracles.cone_covariance_quad(beta, (1.0, 0.0), (1.0, 0.0)), 1e-8, beta=beta))
    B = riesz.LightCone(riesz.PlanePoint.from_tx(1.4, 0.7), (0.2, 0.9))
    C = riesz.LightCone(riesz.PlanePoint.from_tx(1.1, -0.2), (0.2, 0.9))
    out.append(_check("banded_cone_covariance_vs_quadrature", riesz.field_covariance(p, B, C),
                      oracles.cone_covariance_quad(beta, (1.4, 0.7), (1.1, -0.2), (0.2, 0.9)), 1e-8, beta=beta))

    for tau, lam, h in ((1.0, 1.0, 0.25), (0.0, 1.0, 0.5)):
        iv = riesz.increment_variance(p, tau, lam, h)
        out.append(_check("increment_variance_vs_three_term", iv, riesz.increment_variance_threeterm(p, tau, lam, h),
                          1e-10, relative=False, beta=beta, tau=tau, lam=lam, h=h))
    out.append(_check("increment_variance_vs_quadrature", riesz.increment_variance(p, 1.0, 1.0, 0.25),
                      oracles.increment_variance_quad(beta, 1.0, 1.0, 0.25), 1e-8, beta=beta))

    rv = riesz.rectangle_increment_variance(p, 0.0, 1.0, 1.0, 0.5)
    out.append(_check("rectangle_vs_four_point", rv, riesz.rectangle_increment_variance_fourpoint(p, 0.0, 1.0, 1.0, 0.5),
                      1e-9, relative=False, beta=beta))
    out.append(_check("rectangle_lambda_invariance", riesz.rectangle_increment_variance_fourpoint(p, 0.0, 1.0, 7.0, 0.5),
                      riesz.rectangle_increment_variance_fourpoint(p, 0.0, 1.0, 1.0, 0.5), 1e-10, relative=False, beta=beta))

    t0 = math.sqrt(2.0)
    out.append(_check("v1_closed_form_vs_banded", riesz.v1_crosssection_covariance(p, t0, 1.0, 0.6),
                      riesz.v1_crosssection_covariance_banded(p, t0, 1.0, 0.6), 1e-10, relative=False, beta=beta))
    out.append(_check("v1_closed_form_vs_quadrature", riesz.v1_crosssection_covariance(p, t0, 1.0, 1.0),
                      oracles.v1_covariance_quad(beta, t0, 1.0, 1.0), 1e-8, beta=beta))

    grid = [(a, b) for a in (0.0, 0.5, 1.0) for b in (0.0, 0.5, 1.0)]
    out.append(_check("shift_invariance_residual", riesz.shift_invariance_residual(p, 1.0, grid), 0.0, 1e-10,
                      relative=False, beta=beta))
    lo = riesz.rotated_cone(1.2, 1.0, riesz.early_band(1.0))
    hi = riesz.rotated_cone(1.5, 0.8, riesz.late_band(1.0))
    out.append(_check("disjoint_bands_uncorrelated", riesz.field_covariance(p, lo, hi), 0.0, 0.0, relative=False,
                      beta=beta))
    r = riesz.dyadic_increment_correlation(p, 1.0, 1.0, 2.0, 2, 6)
    out.append(_check("dyadic_correlation_in_unit_interval", min(max(r, 0.0), 1.0), r, 0.0, relative=False, beta=beta))
    return out


def gaussian_checks() -> List[Check]:
    out = [
        _check("survival_at_zero", gaussian.gaussian_survival(0.0), 0.5, 1e-15),
        _check("survival_1_96", gaussian.gaussian_survival(1.96), 0.024997895148220435, 1e-12),
    ]
    x = 2.0
    out.append(_check("tail_lower_bound_holds", min(gaussian.gaussian_survival(x) - gaussian.tail_lower_bound(x), 0.0),
                      0.0, 0.0, relative=False, x=x))
    for r in (0.5, -0.5, 0.9):
        out.append(_check("orthant_at_zero_closed_form", gaussian.bivariate_upper_orthant(0.0, 0.0, r),
                          gaussian.orthant_at_zero(r), 1e-10, relative=False, r=r))
    out.append(_check("orthant_independent_product", gaussian.bivariate_upper_orthant(0.7, 1.2, 0.0),
                      gaussian.gaussian_survival(0.7) * gaussian.gaussian_survival(1.2), 1e-15, relative=False))
    for g1, g2, r in ((1.0, 1.0, 0.3), (2.0, 1.5, 0.6)):
        rep = gaussian.slepian_identity_check(g1, g2, r)
        out.append(_check("slepian_derivative", rep["finite_difference"], rep["density"], gaussian.DERIVATIVE_TOL,
                          relative=False, g1=g1, g2=g2, r=r))
        out.append(_check("slepian_mean_value_point", rep["r_star_residual"] if rep["bracketed"] else math.inf, 0.0,
                          gaussian.RSTAR_TOL, relative=False, g1=g1, g2=g2, r=r, r_star=rep["r_star"]))
    d = gaussian.density_identity_check(0.8, 1.1, 0.4)
    out.append(_check("density_heat_identity", d["d_dr"], d["d_dxdy"], d["tolerance"], relative=False))
    out.append(_check("scalar_rate_gamma_3", gaussian.exact_scalar_rate(3.0), math.log(2 * gaussian.gaussian_survival(3.0)) / 9,
                      1e-15))
    return out


def run_selftest(betas: Sequence[float]) -> Dict:
    checks: List[Check] = []
    for beta in betas:
        checks.extend(beta_checks(float(beta)))
    checks.extend(gaussian_checks())
    failures = [c for c in checks if not c["pass"]]
    return {
        "betas": [float(b) for b in betas],
        "n_checks": len(checks),
        "n_failed": len(failures),
        "failed": [c["name"] + str(c["inputs"]) for c in failures],
        "all_pass": not failures,
        "checks": checks,
    }
