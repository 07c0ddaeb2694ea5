from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import integrate

import oracles as O
from spcasimir import (
    Geometry,
    LmaxChoice,
    Material,
    QuadratureSpec,
    SingularityError,
    adaptive_lmax,
    casimir_energy,
    casimir_force_gradient,
    log_det_one_minus,
    pfa_estimates,
    rho_factors,
    trace_derivatives,
)

HBAR_C = 1.054571817e-34 * 299792458.0
GOLD = Material.plasma(136e-9)
PERFECT = Material.perfect()


def _contraction(n, radius, seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n))
    return A * (radius / np.max(np.abs(np.linalg.eigvals(A))))


# ---------------------------------------------------------------- log det


def test_log_det_simple_cases():
    for n in (1, 3, 10):
        assert log_det_one_minus(np.zeros((n, n))) == 0.0
    assert log_det_one_minus(np.array([[0.5]])) == pytest.approx(math.log(0.5), rel=1e-15)


@pytest.mark.parametrize("seed", range(5))
def test_log_det_eigenvalue_oracle(seed):
    M = _contraction(6, 0.7, seed)
    ref = np.sum(np.log(1.0 - np.linalg.eigvals(M))).real
    assert abs(log_det_one_minus(M) - ref) < 1e-10


def test_log_det_singular():
    with pytest.raises(SingularityError):
        log_det_one_minus(np.eye(3))
    with pytest.raises(SingularityError):
        log_det_one_minus(np.array([[1.0, 0.0], [0.0, 0.2]]))


def test_log_det_rejects_non_square():
    with pytest.raises(ValueError):
        log_det_one_minus(np.zeros((2, 3)))


# ---------------------------------------------------------------- trace derivatives


def test_trace_derivatives_scalar():
    mu, d, dd = 0.3, -0.2, 0.5
    d1, d2 = trace_derivatives(np.array([[mu]]), np.array([[d]]), np.array([[dd]]))
    assert d1 == pytest.approx(-d / (1 - mu), rel=1e-14)
    assert d2 == pytest.approx(-dd / (1 - mu) - d**2 / (1 - mu) ** 2, rel=1e-14)


def test_trace_derivatives_zero():
    M = _contraction(4, 0.5, 1)
    z = np.zeros((4, 4))
    assert trace_derivatives(M, z, z) == (0.0, 0.0)


def test_trace_derivatives_finite_differences():
    M0 = _contraction(4, 0.6, 7)
    kappa = np.abs(np.random.default_rng(8).standard_normal((4, 4))) + 0.5
    L = 1.0

    def M(x):
        return M0 * np.exp(-2 * kappa * (x - L))

    dM = -2 * kappa * M(L)
    d2M = 4 * kappa**2 * M(L)
    d1, d2 = trace_derivatives(M(L), dM, d2M)
    h = 1e-4 * L
    fp, f0, fm = (log_det_one_minus(M(x)) for x in (L + h, L, L - h))
    assert d1 == pytest.approx((fp - fm) / (2 * h), rel=1e-6)
    assert d2 == pytest.approx((fp - 2 * f0 + fm) / h**2, rel=1e-6)


def test_trace_derivatives_singular():
    with pytest.raises(SingularityError):
        trace_derivatives(np.eye(2), np.zeros((2, 2)), np.zeros((2, 2)))


# ---------------------------------------------------------------- energy


def _dipole_logdet(xi_tilde, R, L):
    """log det(1 - M) at ell_max = 1 summed over m with multiplicity."""
    tot = 0.0
    for m, w in ((0, 1.0), (1, 2.0)):
        M = O.round_trip_complex(m, xi_tilde, R, L, 1, None, None)
        tot += w * np.log(np.linalg.det(np.eye(M.shape[0]) - M)).real
    return tot


def test_dipole_limit_against_casimir_polder_and_direct_integration():
    R = 100e-9
    g = Geometry.from_ratio(R, 100.0)
    res = casimir_energy(g, PERFECT, PERFECT, 1)
    Lc = g.center_distance
    # perfect sphere: alpha_E = R^3, alpha_M = -R^3/2
    cp = -3 * HBAR_C * (1.5 * R**3) / (8 * math.pi * Lc**4)
    assert res.energy == pytest.approx(cp, rel=5e-3)
    # brute force: adaptive quadrature over xi~ of the complex l = 1 determinant
    val = integrate.quad(lambda t: _dipole_logdet(t, R, g.L), 0, np.inf, epsrel=1e-8, limit=200)[0]
    direct = val / (2 * math.pi) * HBAR_C / Lc
    assert res.energy == pytest.approx(direct, rel=5e-3)
    assert res.energy == pytest.approx(direct, rel=1e-6)


def test_rayleigh_ratio():
    g = Geometry(10e-9, 5e-6)
    e_p = casimir_energy(g, PERFECT, PERFECT, 1).energy
    e_g = casimir_energy(g, GOLD, PERFECT, 1).energy
    assert e_p / e_g == pytest.approx(1.5, rel=0.05)


def test_result_fields_and_per_m_sum():
    g = Geometry.from_ratio(100e-9, 0.5)
    res = casimir_energy(g, GOLD, GOLD, 8)
    assert res.energy < 0
    assert res.force is None and res.gradient is None
    assert res.ell_max_used == 8
    assert [m for m, _ in res.per_m] == list(range(9))
    assert sum(e for _, e in res.per_m) == pytest.approx(res.energy, rel=1e-12)
    assert res.energy_dimensionless * HBAR_C / g.center_distance == pytest.approx(res.energy, rel=1e-15)
    assert res.est_rel_err >= 0.0
    assert res.quadrature == QuadratureSpec()
    assert math.isnan(casimir_energy(g, GOLD, GOLD, 4, estimate_error=False).est_rel_err)


@pytest.mark.parametrize("x", [0.2, 0.5, 1.0, 2.0])
def test_per_m_truncation(x):
    g = Geometry.from_ratio(100e-9, x)
    res = casimir_energy(g, GOLD, GOLD, 24 if x < 0.5 else 12)
    pm = [abs(e) for _, e in res.per_m]
    # m = 1 carries the factor 2 and the normal-incidence coupling, so the
    # decay is monotone from m = 1 onwards
    floor = 1e-15 * abs(res.energy)  # log det(1 - M) rounds to 0 below this
    assert all(b < a or a < floor for a, b in zip(pm[1:], pm[2:]))
    assert all(b <= a for a, b in zip(pm[1:], pm[2:]))
    assert pm[-1] / abs(res.energy) < res.est_rel_err


def test_sign_pattern_gold():
    res = casimir_force_gradient(Geometry(100e-9, 50e-9), GOLD, GOLD, 12, estimate_error=False)
    assert res.energy < 0 and res.force > 0 and res.gradient > 0


@pytest.mark.parametrize("mat", [GOLD, PERFECT], ids=["gold", "perfect"])
def test_force_gradient_against_finite_differences(mat):
    g = Geometry.from_ratio(100e-9, 0.5)
    res = casimir_force_gradient(g, mat, mat, 12, estimate_error=False, fd_check=True)
    assert res.fd_check["force_rel_diff"] < 1e-4
    assert res.fd_check["gradient_rel_diff"] < 1e-3


def test_rho_f_approaches_pfa():
    rho = []
    for x in (0.2, 0.5):
        g = Geometry.from_ratio(100e-9, x)
        res = casimir_force_gradient(g, PERFECT, PERFECT, 24, estimate_error=False)
        rho.append(rho_factors(res, pfa_estimates(g, PERFECT, PERFECT))[0])
    assert abs(rho[0] - 1) < abs(rho[1] - 1)


# ---------------------------------------------------------------- adaptive ell_max


def test_adaptive_lmax_far():
    choice = adaptive_lmax(Geometry.from_ratio(100e-9, 2.0), PERFECT, PERFECT, 1e-4)
    assert isinstance(choice, LmaxChoice)
    assert choice.converged
    assert int(choice) <= 8


def test_adaptive_lmax_close():
    choice = adaptive_lmax(Geometry.from_ratio(100e-9, 0.2), PERFECT, PERFECT, 1e-3)
    assert choice.converged
    assert 20 <= choice.ell_max <= 28


def test_adaptive_lmax_cap_is_flagged():
    choice = adaptive_lmax(Geometry.from_ratio(100e-9, 0.2), PERFECT, PERFECT, 1e-6, cap=8)
    assert not choice.converged
    assert choice.ell_max == 8
    assert choice.residual > 1e-6


@pytest.mark.parametrize("tol", [0.0, 1e-9, 0.1, 0.5, -1e-3])
def test_adaptive_lmax_range(tol):
    with pytest.raises(ValueError):
        adaptive_lmax(Geometry.from_ratio(100e-9, 1.0), PERFECT, PERFECT, tol)


# ---------------------------------------------------------------- properties


def test_monotone_in_distance_and_material_ordering():
    xs = np.linspace(0.2, 2.0, 10)
    e = {}
    for name, mat in (("gold", GOLD), ("perfect", PERFECT)):
        e[name] = [
            casimir_energy(Geometry.from_ratio(100e-9, x), mat, mat, 24, estimate_error=False).energy for x in xs
        ]
        mags = np.abs(e[name])
        assert np.all(np.diff(mags) < 0)
    assert np.all(np.abs(e["gold"]) < np.abs(e["perfect"]))


def test_quadrature_doubling_within_error_estimate():
    g = Geometry.from_ratio(100e-9, 0.5)
    res = casimir_energy(g, GOLD, GOLD, 12)
    fine = casimir_energy(g, GOLD, GOLD, 12, QuadratureSpec(n_xi=80, n_k=120), estimate_error=False)
    assert abs(fine.energy - res.energy) / abs(res.energy) < 3 * res.est_rel_err


def test_worker_count_bit_identical():
    g = Geometry.from_ratio(100e-9, 0.4)
    a = casimir_force_gradient(g, GOLD, GOLD, 10, workers=1, estimate_error=False)
    b = casimir_force_gradient(g, GOLD, GOLD, 10, workers=3, estimate_error=False)
    assert (a.energy, a.force, a.gradient, a.per_m) == (b.energy, b.force, b.gradient, b.per_m)
