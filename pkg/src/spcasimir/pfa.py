"""Plane-plane Lifshitz quantities, PFA estimates and correction factors.

The proximity force approximation turns the plane-plane energy per area
``e_pp(L)`` into the sphere-plane force ``2 pi R e_pp`` and the plane-plane
pressure ``p_pp`` into the gradient ``2 pi R p_pp``. For ideal mirrors::

    F_pfa = hbar c pi^3 R / (360 L^3),    G_pfa = hbar c pi^3 R / (120 L^4)

and ``eta_E``, ``eta_F`` rescale these for real mirrors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .errors import ConvergenceError, DomainError
from .materials import HBAR, C, Material
from .roundtrip import Geometry

HBAR_C = HBAR * C

_N_S = 64


def ideal_energy_per_area(L: float) -> float:
    return -math.pi**2 * HBAR_C / (720.0 * L**3)


def ideal_pressure(L: float) -> float:
    return math.pi**2 * HBAR_C / (240.0 * L**4)


def _reflection_product(K, s, a: Material, b: Material):
    """``r_p^(a) r_p^(b)`` for TE and TM at ``kappa = s K``.

    Written in ``(K, s)`` so the perfect and static limits need no division
    by ``xi``.
    """

    def amps(mat):
        if mat.is_perfect:
            return -np.ones_like(s * K), np.ones_like(s * K)
        kp2 = mat.plasma_wavenumber**2
        Km = np.sqrt(K * K + kp2)
        te = (K - Km) / (K + Km)
        q2 = (s * K) ** 2
        # eps K - K_m with eps = 1 + kp^2 / (sK)^2, multiplied through by (sK)^2
        tm = ((q2 + kp2) * K - q2 * Km) / ((q2 + kp2) * K + q2 * Km)
        return te, tm

    te_a, tm_a = amps(a)
    te_b, tm_b = amps(b)
    return te_a * te_b, tm_a * tm_b


def plane_plane_lifshitz(L: float, plate_a: Material, plate_b: Material, epsrel: float = 1e-11) -> tuple[float, float]:
    """Energy per area (J/m^2, negative) and pressure (N/m^2, positive).

    With ``kappa = s K`` and ``t = 2 K L``::

        e = hbar c / (32 pi^2 L^3) int dt t^2 int_0^1 ds sum_p log(1 - r r e^-t)
        p = hbar c / (32 pi^2 L^4) int dt t^3 int_0^1 ds sum_p r r e^-t / (1 - r r e^-t)

    The ``s`` integral uses a fixed Gauss-Legendre rule, the ``t`` integral
    adaptive quadrature.
    """
    if not (L > 0.0 and math.isfinite(L)):
        raise DomainError(f"L must be positive, got {L!r}")
    if plate_a.is_perfect and plate_b.is_perfect:
        return ideal_energy_per_area(L), ideal_pressure(L)
    x, w = special.roots_legendre(_N_S)
    s = 0.5 * (x + 1.0)
    w = 0.5 * w

    def inner(t, power, kind):
        K = t / (2.0 * L)
        te, tm = _reflection_product(K, s, plate_a, plate_b)
        e = math.exp(-t)
        if kind == "energy":
            val = np.log1p(-te * e) + np.log1p(-tm * e)
        else:
            val = te * e / (1.0 - te * e) + tm * e / (1.0 - tm * e)
        return t**power * float(np.dot(w, val))

    results = []
    for power, kind in ((2, "energy"), (3, "pressure")):
        # split at the decay scale so quad sees the peak
        total = 0.0
        for lo, hi in ((0.0, 4.0), (4.0, 40.0), (40.0, math.inf)):
            val, err = integrate.quad(inner, lo, hi, args=(power, kind), epsabs=0.0, epsrel=epsrel, limit=200)
            if not math.isfinite(val) or abs(err) > 1e-8 * max(abs(val), 1e-300) and abs(err) > 1e-12:
                raise ConvergenceError(f"plane-plane {kind} integral did not converge (err {err:.3g})")
            total += val
        results.append(total)
    pref = HBAR_C / (32.0 * math.pi**2)
    return pref * results[0] / L**3, pref * results[1] / L**4


def eta_factors(L: float, plate: Material, sphere: Material) -> tuple[float, float]:
    """Reduction of plane-plane energy and pressure relative to ideal mirrors."""
    if plate.is_perfect and sphere.is_perfect:
        return 1.0, 1.0
    e, p = plane_plane_lifshitz(L, plate, sphere)
    return e / ideal_energy_per_area(L), p / ideal_pressure(L)


@dataclass(frozen=True)
class PfaEstimates:
    """PFA force (N) and gradient (N/m) with the reflectivity factors."""

    eta_E: float
    eta_F: float
    F_pfa: float
    G_pfa: float
    L: float
    R: float
    sphere: Material
    plate: Material

    @property
    def lambda_P(self) -> tuple[float | None, float | None]:
        """Plasma wavelengths (sphere, plate); ``None`` marks a perfect mirror."""
        return self.sphere.plasma_wavelength, self.plate.plasma_wavelength


def pfa_estimates(geometry: Geometry, sphere: Material, plate: Material) -> PfaEstimates:
    L, R = geometry.L, geometry.R
    eta_E, eta_F = eta_factors(L, plate, sphere)
    F = eta_E * HBAR_C * math.pi**3 * R / (360.0 * L**3)
    G = eta_F * HBAR_C * math.pi**3 * R / (120.0 * L**4)
    return PfaEstimates(eta_E, eta_F, F, G, L, R, sphere, plate)


def rho_factors(full, pfa: PfaEstimates) -> tuple[float, float]:
    """``(F / F_pfa, G / G_pfa)`` for a result of the full computation.

    ``full`` must carry force and gradient and describe the same geometry and
    materials as ``pfa``.
    """
    g = full.geometry
    if g.L != pfa.L or g.R != pfa.R:
        raise ValueError("geometry of the full result differs from the PFA estimate")
    if full.sphere != pfa.sphere or full.plate != pfa.plate:
        raise ValueError("materials of the full result differ from the PFA estimate")
    if full.force is None or full.gradient is None:
        raise ValueError("full result has no force/gradient; use casimir_force_gradient")
    return full.force / pfa.F_pfa, full.gradient / pfa.G_pfa
