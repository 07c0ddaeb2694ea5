"""Log-scaled special functions on the imaginary frequency axis.

Three families live here:

* modified spherical Bessel functions ``i_l`` and ``k_l`` (Abramowitz-Stegun
  normalisation, ``k_0(x) = (pi/2) exp(-x)/x``),
* sphere T-matrix elements (Mie coefficients) ``a_l`` (electric) and ``b_l``
  (magnetic) at imaginary frequency,
* angular functions of the complex propagation angles ``theta^+-`` with
  ``cos theta^+- = +-u`` and ``sin theta^+- = -i sqrt(u^2 - 1)``, ``u >= 1``.

Every l-indexed quantity is carried as ``(sign, log|value|)`` because raw values
leave double range long before ``l = 40``.

Mie convention
--------------
The incident field regular at the sphere centre is expanded in
``i_l(kappa r) X_lm`` (and the curl companion), the scattered field in
``k~_l(kappa r) X_lm`` with ``k~_l = (2/pi) k_l``. ``a_l``/``b_l`` are the
ratios scattered/incident for electric (TM) and magnetic (TE) multipoles.
In the perfect-mirror limit ``b_l = -i_l/k~_l`` and ``a_l = -s_l'/e_l'``
with Riccati functions ``s_l = x i_l``, ``e_l = x k~_l``. For small size
parameter ``a_1 -> (2/3) x^3`` and ``b_1 -> -(1/3) x^3``, i.e. ``(2/3) kappa^3``
times the static polarisabilities ``R^3`` and ``-R^3/2``.

Angular phase rule
------------------
With ``y_lm(theta) = Y_lm(theta, 0)`` (Condon-Shortley phase),
``N_lm = sqrt((2l+1)/(4 pi) (l-m)!/(l+m)!)`` and ``k = sqrt(u^2-1)``, the real
representatives returned by :func:`angular_functions` are::

    y      = N_lm k^m  d^m P_l(u)                       (> 0)
    dy     = N_lm k^(m-1) [m u d^m P_l(u) + k^2 d^(m+1) P_l(u)]   (>= 0)
    d_sum  = m y / k                                    (>= 0)
    d_diff = dy

and the complex functions are recovered as::

    Y_lm(theta^+)          = i^m          y
    Y_lm(theta^-)          = i^m (-1)^(l-m)   y
    d_theta Y_lm(theta^+)  = i^(m+1)      dy
    d_theta Y_lm(theta^-)  = i^(m+1) (-1)^(l-m+1) dy
    m Y_lm(theta^+)/sin theta^+ = i^(m+1)             d_sum
    m Y_lm(theta^-)/sin theta^- = i^(m+1) (-1)^(l-m)  d_sum
    d^l_{m,1} + d^l_{m,-1} = i^(m-1) c_l  d_sum     (at theta^+)
    d^l_{m,1} - d^l_{m,-1} = i^(m-1) c_l  d_diff    (at theta^+)

with ``c_l = 2 sqrt(4 pi / ((2l+1) l (l+1)))``. The Wigner ``d`` follows
``d^l_{m,m'}(theta) = <l m| exp(-i theta J_y) |l m'>``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .errors import DomainError
from .materials import Material

LOG_HALF_PI = math.log(0.5 * math.pi)


@dataclass(frozen=True)
class ScaledValue:
    """A real number stored as sign and natural log of its magnitude.

    Values built with :meth:`from_float` remember the original float so the
    round trip back is exact; arithmetic results are purely log-based.
    """

    sign: int
    log_magnitude: float
    _exact: float | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.sign not in (-1, 0, 1):
            raise ValueError(f"sign must be -1, 0 or +1, got {self.sign!r}")
        if (self.sign == 0) != (self.log_magnitude == -math.inf):
            raise ValueError("sign 0 must pair with log_magnitude -inf")

    @classmethod
    def from_float(cls, value: float) -> "ScaledValue":
        if value == 0.0:
            return cls(0, -math.inf)
        value = float(value)
        return cls(1 if value > 0 else -1, math.log(abs(value)), value)

    def __float__(self) -> float:
        if self.sign == 0:
            return 0.0
        if self._exact is not None:
            return self._exact
        return self.sign * math.exp(self.log_magnitude)

    value = property(__float__)

    def __mul__(self, other: "ScaledValue") -> "ScaledValue":
        s = self.sign * other.sign
        if s == 0:
            return ScaledValue(0, -math.inf)
        return ScaledValue(s, self.log_magnitude + other.log_magnitude)

    def __truediv__(self, other: "ScaledValue") -> "ScaledValue":
        if other.sign == 0:
            raise ZeroDivisionError("division by a zero ScaledValue")
        s = self.sign * other.sign
        if s == 0:
            return ScaledValue(0, -math.inf)
        return ScaledValue(s, self.log_magnitude - other.log_magnitude)


def _scaled_list(sign, logmag) -> list[ScaledValue]:
    sign = np.broadcast_to(sign, np.shape(logmag))
    out = []
    for s, lg in zip(sign, logmag):
        s = int(s)
        out.append(ScaledValue(0, -math.inf) if s == 0 else ScaledValue(s, float(lg)))
    return out


# --------------------------------------------------------------------------
# Modified spherical Bessel functions

def _check_bessel_args(ell_max: int, x: float) -> None:
    if not x > 0.0 or not math.isfinite(x):
        raise DomainError(f"argument must be positive and finite, got {x!r}")
    if int(ell_max) != ell_max or ell_max < 1:
        raise ValueError(f"ell_max must be an integer >= 1, got {ell_max!r}")


def _log_i0(x: float) -> float:
    if x < 20.0:
        return math.log(math.sinh(x) / x)
    return x - math.log(2.0 * x) + math.log1p(-math.exp(-2.0 * x))


def _top_ratio_i(ell: int, x: float) -> float:
    """i_{ell+1}(x)/i_ell(x)."""
    nu = ell + 0.5
    i0 = special.ive(nu, x)
    i1 = special.ive(nu + 1.0, x)
    if i0 > 1e-280 and i1 > 1e-280 and math.isfinite(i0):
        return i1 / i0
    # modified Lentz for 1/(b1 + 1/(b2 + ...)), b_j = (2(ell+j)+1)/x; fast for x < ell
    tiny = 1e-300
    f = tiny
    cc = f
    d = 0.0
    for j in range(1, 100000):
        b = (2.0 * (ell + j) + 1.0) / x
        d = b + d
        d = tiny if d == 0.0 else d
        cc = b + 1.0 / cc
        cc = tiny if cc == 0.0 else cc
        d = 1.0 / d
        delta = cc * d
        f *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return f


def log_bessel_i(ell_max: int, x: float) -> np.ndarray:
    """log i_l(x) for l = 0..ell_max via downward ratio recurrence."""
    _check_bessel_args(ell_max, x)
    ratio = _top_ratio_i(ell_max, x)
    ratios = np.empty(ell_max + 1)
    ratios[0] = 0.0
    for ell in range(ell_max, 0, -1):
        ratio = 1.0 / ((2 * ell + 1) / x + ratio)
        ratios[ell] = ratio
    out = np.empty(ell_max + 1)
    out[0] = _log_i0(x)
    out[1:] = out[0] + np.cumsum(np.log(ratios[1:]))
    return out


def log_bessel_k(ell_max: int, x: float) -> np.ndarray:
    """log k_l(x) for l = 0..ell_max (A&S normalisation) via upward recurrence."""
    _check_bessel_args(ell_max, x)
    out = np.empty(ell_max + 1)
    out[0] = LOG_HALF_PI - x - math.log(x)
    rho = 1.0 + 1.0 / x
    out[1] = out[0] + math.log(rho)
    for ell in range(1, ell_max):
        rho = (2 * ell + 1) / x + 1.0 / rho
        out[ell + 1] = out[ell] + math.log(rho)
    return out


def modified_spherical_bessel(kind: str, ell_max: int, x: float) -> list[ScaledValue]:
    """Modified spherical Bessel values for l = 0..ell_max as ScaledValues.

    ``kind`` is ``"regular"`` (``i_l``) or ``"irregular"`` (``k_l`` with
    ``k_0(x) = (pi/2) e^{-x}/x``).
    """
    if kind == "regular":
        logs = log_bessel_i(ell_max, x)
    elif kind == "irregular":
        logs = log_bessel_k(ell_max, x)
    else:
        raise ValueError(f"kind must be 'regular' or 'irregular', got {kind!r}")
    return _scaled_list(1, logs)


def _riccati_log_derivatives(ell_max, x, log_i, log_k):
    """s_l'/s_l and e_l'/e_l for l = 1..ell_max."""
    ell = np.arange(1, ell_max + 1)
    s_ratio = np.exp(log_i[:-1] - log_i[1:]) - ell / x
    e_ratio = -np.exp(log_k[:-1] - log_k[1:]) - ell / x
    return s_ratio, e_ratio


# --------------------------------------------------------------------------
# Mie coefficients

@dataclass(frozen=True)
class MieCoefficients:
    """Electric (``a``) and magnetic (``b``) T-matrix elements, l = 1..ell_max."""

    ell_max: int
    a: tuple
    b: tuple
    xi: float
    size_parameter: float
    # raw arrays for the assembly code: sign and log magnitude, index l-1
    a_sign: np.ndarray = field(repr=False, compare=False, default=None)
    a_log: np.ndarray = field(repr=False, compare=False, default=None)
    b_sign: np.ndarray = field(repr=False, compare=False, default=None)
    b_log: np.ndarray = field(repr=False, compare=False, default=None)

    def values(self) -> tuple[np.ndarray, np.ndarray]:
        """Unscaled ``(a, b)``; entries that overflow become inf."""
        with np.errstate(over="ignore"):
            return self.a_sign * np.exp(self.a_log), self.b_sign * np.exp(self.b_log)


def mie_log_arrays(ell_max: int, x: float, material: Material, xi_over_wp: float | None = None):
    """Sign/log arrays of ``a_l`` and ``b_l`` at size parameter ``x``.

    ``xi_over_wp`` is ``xi/omega_P`` of the sphere material (ignored for a
    perfect mirror). Returned arrays have length ``ell_max`` (index ``l-1``).
    """
    log_i = log_bessel_i(ell_max, x)
    log_k = log_bessel_k(ell_max, x)
    s_ratio, e_ratio = _riccati_log_derivatives(ell_max, x, log_i, log_k)
    log_pref = log_i[1:] - log_k[1:] + LOG_HALF_PI  # log(s/e), e = x (2/pi) k

    if material.is_perfect:
        fac_b = -np.ones(ell_max)
        fac_a = -s_ratio / e_ratio
    else:
        if xi_over_wp is None:
            raise ValueError("plasma sphere needs xi/omega_P")
        # n = sqrt(eps), n x = sqrt(x^2 + (omega_P R/c)^2) stays finite as xi -> 0
        n = math.sqrt(1.0 + 1.0 / xi_over_wp**2)
        nx = math.hypot(x, x / xi_over_wp)
        log_i_in = log_bessel_i(ell_max, nx)
        ell = np.arange(1, ell_max + 1)
        d_in = np.exp(log_i_in[:-1] - log_i_in[1:]) - ell / nx
        fac_b = (n * d_in - s_ratio) / (e_ratio - n * d_in)
        fac_a = (d_in - n * s_ratio) / (n * e_ratio - d_in)

    with np.errstate(divide="ignore"):
        a_log = log_pref + np.log(np.abs(fac_a))
        b_log = log_pref + np.log(np.abs(fac_b))
    return np.sign(fac_a), a_log, np.sign(fac_b), b_log


def mie_coefficients(ell_max: int, xi: float, radius: float, material: Material) -> MieCoefficients:
    """Mie coefficients ``a_l(i xi)``, ``b_l(i xi)`` for l = 1..ell_max."""
    from .materials import C

    if not xi > 0.0:
        raise DomainError(f"imaginary frequency must be positive, got {xi!r}")
    if not radius > 0.0:
        raise DomainError(f"radius must be positive, got {radius!r}")
    x = xi * radius / C
    ratio = None if material.is_perfect else xi / material.plasma_frequency
    a_sign, a_log, b_sign, b_log = mie_log_arrays(ell_max, x, material, ratio)
    return MieCoefficients(
        ell_max=ell_max,
        a=tuple(_scaled_list(a_sign, a_log)),
        b=tuple(_scaled_list(b_sign, b_log)),
        xi=xi,
        size_parameter=x,
        a_sign=a_sign,
        a_log=a_log,
        b_sign=b_sign,
        b_log=b_log,
    )


# --------------------------------------------------------------------------
# Angular functions

def log_legendre_table(ell_max: int, m_max: int, u: np.ndarray) -> np.ndarray:
    """log of ``N_lm (u^2-1)^(m/2) d^m P_l(u)`` for u > 1.

    Shape ``(ell_max+1, m_max+1, len(u))``; entries with ``m > l`` are -inf.
    Upward recurrence in l is stable here because the wanted solution is the
    dominant one for u >= 1.
    """
    u = np.atleast_1d(np.asarray(u, dtype=float))
    with np.errstate(divide="ignore"):
        log_k = 0.5 * np.log((u - 1.0) * (u + 1.0))
    out = np.full((ell_max + 1, m_max + 1, u.size), -np.inf)
    for m in range(0, min(m_max, ell_max) + 1):
        log_diag = (
            0.5 * math.log((2 * m + 1) / (4.0 * math.pi))
            + 0.5 * math.lgamma(2 * m + 1)
            - m * math.log(2.0)
            - math.lgamma(m + 1)
        )
        if m == 0:
            lg_mm = np.full(u.size, log_diag)
        else:
            lg_mm = log_diag + m * log_k
        out[m, m] = lg_mm
        if m == ell_max:
            continue
        # running scale: values are stored as mantissa * exp(scale)
        scale = lg_mm.copy()
        prev = np.zeros(u.size)
        cur = np.ones(u.size)
        finite = np.isfinite(scale)
        scale = np.where(finite, scale, 0.0)
        cur = np.where(finite, cur, 0.0)
        for ell in range(m + 1, ell_max + 1):
            if ell == m + 1:
                nxt = math.sqrt(2 * m + 3) * u * cur
            else:
                a = math.sqrt((4.0 * ell * ell - 1.0) / (ell * ell - m * m))
                b = math.sqrt(((ell - 1) ** 2 - m * m) / (4.0 * (ell - 1) ** 2 - 1.0))
                nxt = a * (u * cur - b * prev)
            mag = np.where(nxt > 0.0, nxt, 1.0)
            prev = cur / mag
            cur = nxt / mag
            scale = scale + np.log(mag)
            with np.errstate(divide="ignore"):
                out[ell, m] = np.where(finite, scale + np.log(cur), -np.inf)
    return out


def angular_log_tables(ell_max: int, m: int, u: np.ndarray, legendre: np.ndarray | None = None):
    """log of the ``d_sum`` (pi-type) and ``dy`` (tau-type) representatives.

    Returns ``(log_pi, log_tau)``, each shape ``(n_ell, len(u))`` for
    ``l = max(1, m)..ell_max``. ``legendre`` may be a precomputed
    :func:`log_legendre_table` with ``m_max >= m + 1``.
    """
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if legendre is None:
        legendre = log_legendre_table(ell_max, m + 1, u)
    ell_min = max(1, m)
    ells = np.arange(ell_min, ell_max + 1)
    with np.errstate(divide="ignore"):
        log_k = 0.5 * np.log((u - 1.0) * (u + 1.0))
        log_u = np.log(u)
    lp = legendre[ell_min:, m, :]
    lp1 = legendre[ell_min:, m + 1, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        coef = 0.5 * np.log(np.maximum((ells - m) * (ells + m + 1), 0))[:, None]
        if m == 0:
            log_pi = np.full(lp.shape, -np.inf)
            log_tau = coef + lp1
        else:
            log_pi = math.log(m) + lp - log_k
            log_tau = np.logaddexp(log_pi + log_u, coef + lp1)
    return log_pi, log_tau


@dataclass(frozen=True)
class AngularFunctions:
    """Real representatives of the angular functions at one (xi, k) point.

    Entries are indexed by ``l - max(1, |m|)``. See the module docstring for
    the phase rule that maps them back to complex values.
    """

    ell_max: int
    m: int
    cos_plus: float
    sin_plus_mag: float
    y: tuple
    dy: tuple
    d_sum: tuple
    d_diff: tuple

    @property
    def ell_min(self) -> int:
        return max(1, abs(self.m))


def angular_functions(ell_max: int, m: int, xi_tilde: float, k_tilde: float) -> AngularFunctions:
    """Angular representatives at ``cos theta^+ = sqrt(xi~^2 + k~^2)/xi~``.

    For negative ``m`` the representatives of ``|m|`` are returned; the
    round-trip blocks of ``+m`` and ``-m`` have equal determinants.
    """
    if not xi_tilde > 0.0:
        raise DomainError(f"xi_tilde must be positive, got {xi_tilde!r}")
    if not k_tilde >= 0.0:
        raise DomainError(f"k_tilde must be non-negative, got {k_tilde!r}")
    if abs(m) > ell_max:
        raise ValueError(f"|m| = {abs(m)} exceeds ell_max = {ell_max}")
    am = abs(m)
    ratio = k_tilde / xi_tilde
    u = math.sqrt(1.0 + ratio * ratio)
    ell_min = max(1, am)
    ells = np.arange(ell_min, ell_max + 1)

    if ratio == 0.0:
        # normal incidence: only |m| = 1 survives, representatives are finite limits
        legendre_y = np.full(ells.size, -np.inf)
        if am == 0:
            legendre_y = 0.5 * np.log((2 * ells + 1) / (4.0 * math.pi))
        lpi = np.full(ells.size, -np.inf)
        if am == 1:
            # m y / k and dy tend to N_l1 * l(l+1)/2
            lim = 0.5 * np.log((2 * ells + 1) / (4.0 * math.pi) / (ells * (ells + 1))) + np.log(
                ells * (ells + 1) / 2.0
            )
            lpi = lim
        ltau = lpi.copy()
        ly = legendre_y
    else:
        table = log_legendre_table(ell_max, am + 1, np.array([u]))
        ly = table[ell_min:, am, 0]
        lpi, ltau = angular_log_tables(ell_max, am, np.array([u]), table)
        lpi, ltau = lpi[:, 0], ltau[:, 0]

    def pack(arr):
        return tuple(_scaled_list(np.where(np.isfinite(arr), 1, 0), arr))

    return AngularFunctions(
        ell_max=ell_max,
        m=m,
        cos_plus=u,
        sin_plus_mag=ratio,
        y=pack(ly),
        dy=pack(ltau),
        d_sum=pack(lpi),
        d_diff=pack(ltau),
    )
