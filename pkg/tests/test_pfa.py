from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import integrate

import oracles as O
from spcasimir import (
    DomainError,
    Geometry,
    Material,
    PfaEstimates,
    casimir_energy,
    casimir_force_gradient,
    eta_factors,
    pfa_estimates,
    plane_plane_lifshitz,
    rho_factors,
)

HBAR = 1.054571817e-34
C = 299792458.0
HBAR_C = HBAR * C
GOLD = Material.plasma(136e-9)
PERFECT = Material.perfect()


def ideal(L):
    return -math.pi**2 * HBAR_C / (720 * L**3), math.pi**2 * HBAR_C / (240 * L**4)


def lifshitz_oracle(L, lam_a, lam_b):
    """Textbook double integral over (xi, k) with adaptive quadrature.

    Variables in units of 1/L: xi -> xi L / c, k -> k L.
    """

    def terms(k, xi):
        kappa = math.hypot(xi, k)
        e = math.exp(-2 * kappa)
        ra = O.fresnel_textbook(k / L, xi * C / L, lam_a)
        rb = O.fresnel_textbook(k / L, xi * C / L, lam_b)
        return kappa, e, [a * b for a, b in zip(ra, rb)]

    def f_e(k, xi):
        kappa, e, rr = terms(k, xi)
        return k * sum(math.log1p(-r * e) for r in rr)

    def f_p(k, xi):
        kappa, e, rr = terms(k, xi)
        return k * kappa * sum(r * e / (1 - r * e) for r in rr)

    opts = dict(epsabs=0, epsrel=1e-10)
    ie = integrate.dblquad(f_e, 0, np.inf, 0, np.inf, **opts)[0]
    ip = integrate.dblquad(f_p, 0, np.inf, 0, np.inf, **opts)[0]
    return HBAR_C / (4 * math.pi**2 * L**3) * ie, HBAR_C / (2 * math.pi**2 * L**4) * ip


def test_oracle_reproduces_ideal():
    L = 100e-9
    e, p = lifshitz_oracle(L, None, None)
    ie, ip = ideal(L)
    assert e == pytest.approx(ie, rel=1e-8)
    assert p == pytest.approx(ip, rel=1e-8)


@pytest.mark.parametrize("L", [10e-9, 136e-9, 3e-6])
def test_ideal_limit(L):
    e, p = plane_plane_lifshitz(L, PERFECT, PERFECT)
    ie, ip = ideal(L)
    assert e == pytest.approx(ie, rel=1e-6)
    assert p == pytest.approx(ip, rel=1e-6)
    # the numerical path with an almost ideal plasma mirror
    near = Material.plasma(1e-7 * L)
    e, p = plane_plane_lifshitz(L, near, near)
    assert e == pytest.approx(ie, rel=1e-6)
    assert p == pytest.approx(ip, rel=1e-6)


def test_large_distance_plasma_limit():
    L = 100 * 136e-9
    e, p = plane_plane_lifshitz(L, GOLD, GOLD)
    ie, ip = ideal(L)
    assert e / ie == pytest.approx(1.0, abs=1e-2)
    assert p / ip == pytest.approx(1.0, abs=1e-2)
    eta_E, eta_F = eta_factors(L, GOLD, GOLD)
    assert 1 - 1e-2 < eta_E < 1 and 1 - 1e-2 < eta_F < 1


def test_gold_against_independent_quadrature():
    L = 136e-9
    e, p = plane_plane_lifshitz(L, GOLD, GOLD)
    re, rp = lifshitz_oracle(L, 136e-9, 136e-9)
    assert e == pytest.approx(re, rel=1e-6)
    assert p == pytest.approx(rp, rel=1e-6)
    eta_E, eta_F = eta_factors(L, GOLD, GOLD)
    assert eta_E == pytest.approx(re / ideal(L)[0], rel=1e-6)
    assert eta_F == pytest.approx(rp / ideal(L)[1], rel=1e-6)


def test_mixed_materials_against_independent_quadrature():
    L = 100e-9
    e, p = plane_plane_lifshitz(L, GOLD, PERFECT)
    re, rp = lifshitz_oracle(L, 136e-9, None)
    assert e == pytest.approx(re, rel=1e-6)
    assert p == pytest.approx(rp, rel=1e-6)
    # one perfect mirror weakens the interaction less than two plasma mirrors
    assert eta_factors(L, GOLD, GOLD)[0] < eta_factors(L, GOLD, PERFECT)[0] < 1


def test_lifshitz_domain():
    for L in (0.0, -1e-9, math.inf):
        with pytest.raises(DomainError):
            plane_plane_lifshitz(L, GOLD, GOLD)


def test_eta_perfect_exact():
    assert eta_factors(50e-9, PERFECT, PERFECT) == (1.0, 1.0)


@pytest.mark.parametrize("L,lam", [(50e-9, 136e-9), (136e-9, 136e-9), (1e-6, 300e-9)])
def test_eta_scale_invariance(L, lam):
    a = eta_factors(L, Material.plasma(lam), Material.plasma(lam))
    b = eta_factors(2 * L, Material.plasma(2 * lam), Material.plasma(2 * lam))
    assert a[0] == pytest.approx(b[0], rel=1e-8)
    assert a[1] == pytest.approx(b[1], rel=1e-8)


def test_eta_monotone_and_bounded():
    ratios = np.geomspace(0.01, 100, 15)
    etas = np.array([eta_factors(r * 136e-9, GOLD, GOLD) for r in ratios])
    assert np.all((etas > 0) & (etas <= 1))
    assert np.all(np.diff(etas[:, 0]) > 0)
    assert np.all(np.diff(etas[:, 1]) > 0)
    # force is more sensitive to the finite reflectivity than energy
    assert np.all(etas[:, 1] < etas[:, 0])


def test_pfa_estimates_exact_construction():
    g = Geometry(100e-9, 60e-9)
    for mat in (PERFECT, GOLD):
        est = pfa_estimates(g, mat, mat)
        assert isinstance(est, PfaEstimates)
        assert est.F_pfa == est.eta_E * HBAR_C * math.pi**3 * g.R / (360 * g.L**3)
        assert est.G_pfa == est.eta_F * HBAR_C * math.pi**3 * g.R / (120 * g.L**4)
        assert (est.L, est.R) == (g.L, g.R)
    assert pfa_estimates(g, PERFECT, PERFECT).lambda_P == (None, None)
    assert pfa_estimates(g, GOLD, PERFECT).lambda_P == (136e-9, None)


def test_pfa_matches_plane_plane_via_proximity():
    # F_pfa = 2 pi R |e_pp| and G_pfa = 2 pi R p_pp
    g = Geometry(100e-9, 40e-9)
    est = pfa_estimates(g, GOLD, GOLD)
    e, p = plane_plane_lifshitz(g.L, GOLD, GOLD)
    assert est.F_pfa == pytest.approx(2 * math.pi * g.R * abs(e), rel=1e-12)
    assert est.G_pfa == pytest.approx(2 * math.pi * g.R * p, rel=1e-12)


@pytest.fixture(scope="module")
def full_gold():
    return casimir_force_gradient(Geometry(100e-9, 60e-9), GOLD, GOLD, 8, estimate_error=False)


def test_rho_identity(full_gold):
    est = pfa_estimates(full_gold.geometry, GOLD, GOLD)
    fake = PfaEstimates(1.0, 1.0, full_gold.force, full_gold.gradient, est.L, est.R, GOLD, GOLD)
    assert rho_factors(full_gold, fake) == (1.0, 1.0)
    rF, rG = rho_factors(full_gold, est)
    assert rF == full_gold.force / est.F_pfa
    assert rG == full_gold.gradient / est.G_pfa
    assert 0 < rF < 1 and 0 < rG < 1


def test_rho_mismatch(full_gold):
    with pytest.raises(ValueError):
        rho_factors(full_gold, pfa_estimates(Geometry(100e-9, 61e-9), GOLD, GOLD))
    with pytest.raises(ValueError):
        rho_factors(full_gold, pfa_estimates(Geometry(101e-9, 60e-9), GOLD, GOLD))
    with pytest.raises(ValueError):
        rho_factors(full_gold, pfa_estimates(full_gold.geometry, PERFECT, GOLD))
    with pytest.raises(ValueError):
        rho_factors(full_gold, pfa_estimates(full_gold.geometry, GOLD, Material.plasma(150e-9)))


def test_rho_needs_force(full_gold):
    energy_only = casimir_energy(full_gold.geometry, GOLD, GOLD, 4, estimate_error=False)
    with pytest.raises(ValueError):
        rho_factors(energy_only, pfa_estimates(full_gold.geometry, GOLD, GOLD))
