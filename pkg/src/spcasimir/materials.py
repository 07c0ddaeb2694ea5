"""Dielectric response on the imaginary frequency axis and Fresnel amplitudes.

Frequencies are imaginary frequencies ``xi`` in rad/s, wavevectors in 1/m.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

HBAR = 1.054571817e-34
C = 299792458.0

PERFECT_EPS = math.inf


@dataclass(frozen=True)
class PhysicalConstants:
    hbar: float = HBAR
    c: float = C


CONSTANTS = PhysicalConstants()


@dataclass(frozen=True)
class Material:
    """Mirror material: a perfect reflector or a plasma-model metal.

    Use :meth:`perfect` or :meth:`plasma` rather than the constructor.
    """

    kind: str = "perfect"
    plasma_wavelength: float | None = None

    def __post_init__(self):
        if self.kind == "perfect":
            if self.plasma_wavelength is not None:
                raise ValueError("perfect material takes no plasma wavelength")
        elif self.kind == "plasma":
            lp = self.plasma_wavelength
            if lp is None or not (lp > 0.0) or not math.isfinite(lp):
                raise ValueError(f"plasma wavelength must be positive, got {lp!r}")
        else:
            raise ValueError(f"unknown material kind {self.kind!r}")

    @classmethod
    def perfect(cls) -> "Material":
        return cls("perfect")

    @classmethod
    def plasma(cls, plasma_wavelength: float) -> "Material":
        return cls("plasma", float(plasma_wavelength))

    @property
    def is_perfect(self) -> bool:
        return self.kind == "perfect"

    @property
    def plasma_frequency(self) -> float:
        """omega_P = 2 pi c / lambda_P in rad/s (inf for perfect mirrors)."""
        if self.is_perfect:
            return math.inf
        return 2.0 * math.pi * C / self.plasma_wavelength

    @property
    def plasma_wavenumber(self) -> float:
        """k_P = omega_P / c = 2 pi / lambda_P in 1/m."""
        if self.is_perfect:
            return math.inf
        return 2.0 * math.pi / self.plasma_wavelength

    def label(self) -> str:
        if self.is_perfect:
            return "perfect"
        return f"plasma({self.plasma_wavelength:.6g} m)"


GOLD = Material.plasma(136e-9)


def permittivity(xi: float, material: Material) -> float:
    """Permittivity eps(i xi); ``math.inf`` marks a perfect mirror."""
    if not xi > 0.0:
        raise DomainError(f"imaginary frequency must be positive, got {xi!r}")
    if material.is_perfect:
        return PERFECT_EPS
    return 1.0 + (material.plasma_frequency / xi) ** 2


def fresnel_from_ratio(u, w2):
    """Plasma Fresnel amplitudes in reduced variables.

    ``u = K c / xi >= 1`` and ``w2 = eps - 1 = (omega_P/xi)^2``. Returns
    ``(r_TE, r_TM)`` written without the cancellation of the textbook form
    when ``w2`` is small.
    """
    u = np.asarray(u, dtype=float)
    root = np.sqrt(u * u + w2)
    denom = u + root
    r_te = -w2 / (denom * denom)
    eps = 1.0 + w2
    num_tm = w2 * (u - 1.0 / denom)
    r_tm = num_tm / (eps * u + root)
    return r_te, r_tm


def fresnel_amplitudes(k, xi: float, material: Material):
    """Plane-mirror reflection amplitudes ``(r_TE, r_TM)`` at ``(k, i xi)``.

    With ``K = sqrt(xi^2/c^2 + k^2)`` and ``K_m = sqrt(eps xi^2/c^2 + k^2)``::

        r_TE = (K - K_m) / (K + K_m)
        r_TM = (eps K - K_m) / (eps K + K_m)

    Perfect mirrors give ``(-1, +1)``. ``k`` may be an array.
    """
    if not xi > 0.0:
        raise DomainError(f"imaginary frequency must be positive, got {xi!r}")
    k = np.asarray(k, dtype=float)
    if np.any(k < 0.0):
        raise DomainError("transverse wavevector must be non-negative")
    if material.is_perfect:
        ones = np.ones_like(k)
        r_te, r_tm = -ones, ones
    else:
        kappa = xi / C
        u = np.sqrt(1.0 + (k / kappa) ** 2)
        w2 = (material.plasma_frequency / xi) ** 2
        r_te, r_tm = fresnel_from_ratio(u, w2)
    if r_te.ndim == 0:
        return float(r_te), float(r_tm)
    return r_te, r_tm
