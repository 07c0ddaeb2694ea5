"""Round-trip matrix of the sphere-plane cavity, one azimuthal block at a time.

All lengths are measured in units of the centre-to-plate distance
``Lc = L + R`` and frequencies as ``xi~ = xi Lc / c``. The transverse
wavevector integral runs over ``u = K c / xi`` in ``[1, inf)`` with weight
``exp(-2 xi~ u)``; the substitution ``t = 2 xi~ (u - 1)`` turns it into a
Gauss-Laguerre rule.

Conventions
-----------
Rows and columns are ordered ``(E, l_min), ..., (E, l_max), (M, l_min), ...,
(M, l_max)``. The plate operator ``N`` (outgoing multipoles -> regular
multipoles after one reflection on the plate) is made real by the diagonal
phase ``Phi = diag((-1)^l * i^[P = M])``, and the product ``T N`` with the
sphere T-matrix ``T = diag(a_l, b_l)`` is balanced by ``S = diag(sqrt|T|)``::

    matrix = S^-1 Phi (T N) Phi^-1 S

Both are similarity transforms, so ``det(1 - matrix)`` is the physical
determinant. ``RoundTripBlock.complex_matrix`` undoes them.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .errors import ConvergenceError, DomainError
from .materials import Material, fresnel_from_ratio
from .specfun import angular_log_tables, log_legendre_table, mie_log_arrays

POLARIZATIONS = ("TE", "TM")


@dataclass(frozen=True)
class Geometry:
    """Sphere of radius ``R`` at surface gap ``L`` above a plane (metres)."""

    R: float
    L: float

    def __post_init__(self):
        if not (self.R > 0.0 and math.isfinite(self.R)):
            raise DomainError(f"sphere radius must be positive, got {self.R!r}")
        if not (self.L > 0.0 and math.isfinite(self.L)):
            raise DomainError(f"gap must be positive, got {self.L!r}")

    @classmethod
    def from_ratio(cls, R: float, x: float) -> "Geometry":
        """Geometry with ``L = x R``."""
        return cls(R, x * R)

    @property
    def sphere_radius(self) -> float:
        return self.R

    @property
    def gap(self) -> float:
        return self.L

    @property
    def center_distance(self) -> float:
        return self.L + self.R

    @property
    def x(self) -> float:
        """Aspect ratio L/R."""
        return self.L / self.R

    @property
    def radius_ratio(self) -> float:
        """R / Lc, the sphere radius in internal length units."""
        return self.R / self.center_distance


@dataclass(frozen=True)
class QuadratureSpec:
    """Node counts and schemes for the frequency and wavevector integrals.

    ``xi_scheme``: Gauss-Legendre on ``t`` in (0, 1) mapped by
    ``xi~ = xi_scale * t / (1 - t)``. ``k_scheme``: Gauss-Laguerre in
    ``2 (K~ - xi~)``.
    """

    n_xi: int = 40
    n_k: int = 60
    xi_scale: float = 1.0
    xi_scheme: str = "gauss-legendre-rational"
    k_scheme: str = "gauss-laguerre"

    def __post_init__(self):
        if self.n_xi < 8 or self.n_k < 8:
            raise ValueError("quadrature node counts must be >= 8")
        if not self.xi_scale > 0.0:
            raise ValueError("xi_scale must be positive")
        if self.xi_scheme != "gauss-legendre-rational":
            raise ValueError(f"unknown xi scheme {self.xi_scheme!r}")
        if self.k_scheme != "gauss-laguerre":
            raise ValueError(f"unknown k scheme {self.k_scheme!r}")

    def doubled(self) -> "QuadratureSpec":
        return QuadratureSpec(2 * self.n_xi, 2 * self.n_k, self.xi_scale, self.xi_scheme, self.k_scheme)

    def as_dict(self) -> dict:
        return {
            "n_xi": self.n_xi,
            "n_k": self.n_k,
            "xi_scale": self.xi_scale,
            "xi_scheme": self.xi_scheme,
            "k_scheme": self.k_scheme,
        }


@functools.lru_cache(maxsize=16)
def _laguerre(n: int):
    t, w = special.roots_laguerre(n)
    t.setflags(write=False)
    w.setflags(write=False)
    return t, w


def k_nodes(xi_tilde: float, n_k: int, log: bool = False):
    """Nodes ``u`` and weights for ``int_1^inf du exp(-2 xi~ u) f(u)``.

    With ``log=True`` the natural log of the weights is returned instead,
    which stays finite where ``exp(-2 xi~)`` underflows.
    """
    t, w = _laguerre(n_k)
    u = 1.0 + t / (2.0 * xi_tilde)
    log_w = np.log(w) - 2.0 * xi_tilde - math.log(2.0 * xi_tilde)
    if log:
        return u, log_w
    return u, np.exp(log_w)


def exponential_moments(xi_tilde: float, n_k: int, f, order: int = 0) -> float:
    """``int_1^inf du exp(-2 xi~ u) f(u) (-2 xi~ u)^order``.

    Exposes the wavevector rule used by the assembly (with ``order`` 1, 2
    giving the L-derivative integrands) for direct testing.
    """
    u, weights = k_nodes(xi_tilde, n_k)
    return float(np.sum(weights * f(u) * (-2.0 * xi_tilde * u) ** order))


@dataclass
class FrequencyData:
    """Everything shared by the m-blocks at one frequency node."""

    xi_tilde: float
    ell_max: int
    u: np.ndarray
    log_weights: np.ndarray
    r_te: np.ndarray
    r_tm: np.ndarray
    legendre: np.ndarray
    a_sign: np.ndarray
    a_log: np.ndarray
    b_sign: np.ndarray
    b_log: np.ndarray


def plate_amplitudes(u: np.ndarray, xi_tilde: float, geometry: Geometry, plate: Material):
    if plate.is_perfect:
        ones = np.ones_like(u)
        return -ones, ones
    w2 = (geometry.center_distance * plate.plasma_wavenumber / xi_tilde) ** 2
    return fresnel_from_ratio(u, w2)


def frequency_data(
    xi_tilde: float,
    geometry: Geometry,
    sphere: Material,
    plate: Material,
    spec: QuadratureSpec,
    ell_max: int,
) -> FrequencyData:
    """Quadrature nodes, Fresnel amplitudes, Legendre table and Mie data."""
    if not xi_tilde > 0.0:
        raise DomainError(f"xi_tilde must be positive, got {xi_tilde!r}")
    u, log_weights = k_nodes(xi_tilde, spec.n_k, log=True)
    r_te, r_tm = plate_amplitudes(u, xi_tilde, geometry, plate)
    legendre = log_legendre_table(ell_max, ell_max + 1, u)
    x = xi_tilde * geometry.radius_ratio
    ratio = None
    if not sphere.is_perfect:
        ratio = xi_tilde / (geometry.center_distance * sphere.plasma_wavenumber)
    a_sign, a_log, b_sign, b_log = mie_log_arrays(ell_max, x, sphere, ratio)
    return FrequencyData(xi_tilde, ell_max, u, log_weights, r_te, r_tm, legendre, a_sign, a_log, b_sign, b_log)


def _check_block_args(m: int, ell_max: int) -> None:
    if int(ell_max) != ell_max or ell_max < 1:
        raise ValueError(f"ell_max must be an integer >= 1, got {ell_max!r}")
    if abs(m) > ell_max:
        raise ValueError(f"empty block: |m| = {abs(m)} > ell_max = {ell_max}")


def _side_factors(data: FrequencyData, m: int, half_log_a, half_log_b):
    """Per-node factors ``g`` for the four (P, angular type) combinations.

    Each entry of the plate operator is ``sum_j r_p(u_j) g1(u_j) g2(u_j)``;
    the quadrature weight (which carries ``exp(-2 xi~ u)``) is split evenly
    between both sides to keep the factors in range.
    """
    am = abs(m)
    ell_min = max(1, am)
    ells = np.arange(ell_min, data.ell_max + 1)
    log_pi, log_tau = angular_log_tables(data.ell_max, am, data.u, data.legendre)
    side = (0.5 * np.log(4.0 * math.pi / (ells * (ells + 1.0))))[:, None] + 0.5 * data.log_weights[None, :]
    out = {}
    for label, half in (("E", half_log_a), ("M", half_log_b)):
        h = half[ell_min - 1 :, None]
        with np.errstate(over="raise"):
            out[label, "pi"] = np.exp(log_pi + side + h)
            out[label, "tau"] = np.exp(log_tau + side + h)
    return out


def _kernel(data: FrequencyData, m: int, half_log_a, half_log_b, orders=(0,)):
    """Symmetric kernel ``L diag(w) L^T`` for the requested derivative orders."""
    g = _side_factors(data, m, half_log_a, half_log_b)
    # TE nodes first, then TM nodes; E rows use (pi, tau), M rows (tau, pi)
    left_e = np.hstack([g["E", "pi"], g["E", "tau"]])
    left_m = np.hstack([g["M", "tau"], g["M", "pi"]])
    left = np.vstack([left_e, left_m])
    base = np.concatenate([-data.r_te, data.r_tm])
    factor = np.concatenate([data.u, data.u]) * (-2.0 * data.xi_tilde)
    n = left_e.shape[0]
    sigma = np.concatenate([np.ones(n), -np.ones(n)])
    mats = []
    for order in orders:
        w = base * factor**order if order else base
        mats.append((left * w) @ left.T)
    if m < 0:
        # the -m block differs by the similarity diag(1_E, -1_M)
        flip = np.concatenate([np.ones(n), -np.ones(n)])
        mats = [flip[:, None] * mat * flip[None, :] for mat in mats]
    return mats, sigma


@dataclass(frozen=True)
class ABCD:
    """Wavevector integrals per polarization, arrays of shape (2, n, n) [TE, TM].

    ``A``: pi-pi, ``B``: tau-tau, ``C``: pi(l1)-tau(l2), ``D``: tau(l1)-pi(l2),
    each including ``r_p`` and the factor ``4 pi / sqrt(l1(l1+1) l2(l2+1))``.
    """

    m: int
    ell_min: int
    ell_max: int
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    derivative_order: int = 0

    def plate_operator(self) -> np.ndarray:
        """Real plate operator ``Phi N Phi^-1`` (no sphere T-matrix)."""
        te, tm = 0, 1
        ee = -self.A[te] + self.B[tm]
        mm = self.B[te] - self.A[tm]
        em = -self.C[te] + self.D[tm]
        me = self.D[te] - self.C[tm]
        return np.block([[ee, em], [me, mm]])


def compute_ABCD(
    m: int,
    xi_tilde: float,
    geometry: Geometry,
    plate: Material,
    spec: QuadratureSpec | None = None,
    ell_max: int = 1,
    derivative_order: int = 0,
    tolerance: float | None = None,
) -> ABCD:
    """Unscaled A/B/C/D wavevector integrals for one azimuthal number ``m >= 0``.

    ``derivative_order`` 1 or 2 multiplies the integrand by ``(-2 K Lc)`` or its
    square. With ``tolerance`` set, the integrals are recomputed with doubled
    ``n_k`` and a :class:`ConvergenceError` is raised when any entry moves by
    more than ``tolerance`` relative to the largest entry.
    """
    spec = spec or QuadratureSpec()
    if m < 0:
        raise ValueError("compute_ABCD takes m >= 0")
    _check_block_args(m, ell_max)
    result = _abcd(m, xi_tilde, geometry, plate, spec, ell_max, derivative_order)
    if tolerance is not None:
        finer = _abcd(m, xi_tilde, geometry, plate, spec.doubled(), ell_max, derivative_order)
        worst = 0.0
        where = None
        for name in "ABCD":
            a, b = getattr(result, name), getattr(finer, name)
            scale = max(np.max(np.abs(b)), 1e-300)
            diff = np.max(np.abs(a - b)) / scale
            if diff > worst:
                worst, where = diff, name
        if worst > tolerance:
            raise ConvergenceError(f"k-quadrature not converged: {where} moved by {worst:.3g} (m={m}, xi~={xi_tilde})")
    return result


def _abcd(m, xi_tilde, geometry, plate, spec, ell_max, order):
    u, log_weights = k_nodes(xi_tilde, spec.n_k, log=True)
    r_te, r_tm = plate_amplitudes(u, xi_tilde, geometry, plate)
    legendre = log_legendre_table(ell_max, m + 1, u)
    log_pi, log_tau = angular_log_tables(ell_max, m, u, legendre)
    ells = np.arange(max(1, m), ell_max + 1)
    side = (0.5 * np.log(4.0 * math.pi / (ells * (ells + 1.0))))[:, None] + 0.5 * log_weights[None, :]
    g_pi = np.exp(log_pi + side)
    g_tau = np.exp(log_tau + side)
    w = (-2.0 * xi_tilde * u) ** order
    out = {}
    for name, (g1, g2) in {"A": (g_pi, g_pi), "B": (g_tau, g_tau), "C": (g_pi, g_tau), "D": (g_tau, g_pi)}.items():
        out[name] = np.stack([(g1 * (w * r)) @ g2.T for r in (r_te, r_tm)])
    return ABCD(m, int(ells[0]), ell_max, out["A"], out["B"], out["C"], out["D"], order)


@dataclass(frozen=True)
class RoundTripBlock:
    """Balanced real round-trip matrix for one ``(m, xi~)``.

    ``log_scale`` holds ``log sqrt|T|`` per row index and ``t_sign`` the sign
    of ``T``; see the module docstring for the transforms.
    """

    m: int
    xi_tilde: float
    ell_min: int
    ell_max: int
    matrix: np.ndarray
    dM_dL: np.ndarray | None = None
    d2M_dL2: np.ndarray | None = None
    log_scale: np.ndarray = field(default=None, repr=False)
    t_sign: np.ndarray = field(default=None, repr=False)

    @property
    def dimension(self) -> int:
        return 2 * (self.ell_max - self.ell_min + 1)

    def phase(self) -> np.ndarray:
        ells = np.arange(self.ell_min, self.ell_max + 1)
        par = (-1.0) ** ells
        return np.concatenate([par, 1j * par])

    def complex_matrix(self) -> np.ndarray:
        """The round-trip operator in the complex multipole basis.

        Only for small ``ell_max``: the unscaled entries overflow quickly.
        """
        s = np.exp(self.log_scale)
        phi = self.phase()
        unbalanced = s[:, None] * self.matrix / s[None, :]
        return unbalanced * phi[None, :] / phi[:, None]


def assemble_block(
    m: int,
    xi_tilde: float,
    geometry: Geometry,
    sphere: Material,
    plate: Material,
    spec: QuadratureSpec | None = None,
    ell_max: int = 1,
    with_derivatives: bool = False,
    data: FrequencyData | None = None,
) -> RoundTripBlock:
    """Round-trip block ``M^(m)(xi~)`` with optional L-derivatives.

    ``dM_dL`` and ``d2M_dL2`` are derivatives with respect to the gap at fixed
    physical frequency, in units of ``1/Lc`` and ``1/Lc^2``. Pass ``data`` to
    reuse the per-frequency tables across ``m``.
    """
    spec = spec or QuadratureSpec()
    _check_block_args(m, ell_max)
    if data is None:
        data = frequency_data(xi_tilde, geometry, sphere, plate, spec, ell_max)
    elif data.ell_max != ell_max or data.xi_tilde != xi_tilde:
        raise ValueError("frequency data does not match the requested block")
    half_a = 0.5 * data.a_log
    half_b = 0.5 * data.b_log
    orders = (0, 1, 2) if with_derivatives else (0,)
    mats, sigma = _kernel(data, m, half_a, half_b, orders)
    ell_min = max(1, abs(m))
    t_sign = np.concatenate([data.a_sign[ell_min - 1 :], data.b_sign[ell_min - 1 :]])
    row = t_sign * sigma
    mats = [row[:, None] * mat for mat in mats]
    log_scale = np.concatenate([half_a[ell_min - 1 :], half_b[ell_min - 1 :]])
    dim = 2 * (ell_max - ell_min + 1)
    assert mats[0].shape == (dim, dim)
    return RoundTripBlock(
        m=m,
        xi_tilde=xi_tilde,
        ell_min=ell_min,
        ell_max=ell_max,
        matrix=mats[0],
        dM_dL=mats[1] if with_derivatives else None,
        d2M_dL2=mats[2] if with_derivatives else None,
        log_scale=log_scale,
        t_sign=t_sign,
    )
