"""Log-determinants, frequency integration and the sphere-plane energy, force
and force gradient.

Sign conventions: the energy is negative, the force is reported as the
magnitude of the attraction ``F = dE/dL > 0`` and the gradient as
``G = -dF/dL = -d2E/dL2 > 0``, so that both compare directly with the positive
PFA estimates.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg, special

from .errors import ConvergenceError, DomainError, SingularityError
from .materials import HBAR, C, Material
from .roundtrip import Geometry, QuadratureSpec, assemble_block, frequency_data

HBAR_C = HBAR * C


def log_det_one_minus(M) -> float:
    """``log det(1 - M)`` from an LU factorisation of ``1 - M``.

    Raises :class:`SingularityError` when ``1 - M`` is singular or its
    determinant is not positive (the round-trip operator is no contraction).
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("M must be a square matrix")
    n = M.shape[0]
    if n == 0:
        return 0.0
    lu, piv = linalg.lu_factor(np.eye(n) - M, check_finite=True)
    diag = np.diag(lu)
    if np.any(diag == 0.0):
        raise SingularityError("1 - M is singular")
    swaps = int(np.count_nonzero(piv != np.arange(n)))
    sign = (-1) ** swaps * int(np.prod(np.sign(diag)))
    if sign <= 0:
        raise SingularityError("det(1 - M) <= 0: spectral radius of M is not below 1")
    return float(np.sum(np.log(np.abs(diag))))


def _factor(M):
    n = M.shape[0]
    try:
        with np.errstate(all="ignore"):
            lu = linalg.lu_factor(np.eye(n) - M, check_finite=True)
    except (linalg.LinAlgError, ValueError) as exc:
        raise SingularityError(str(exc)) from exc
    if np.any(np.diag(lu[0]) == 0.0):
        raise SingularityError("1 - M is singular")
    return lu


def trace_derivatives(M, dM, d2M) -> tuple[float, float]:
    """First and second derivatives of ``log det(1 - M)``.

    ``d1 = -tr[(1-M)^-1 dM]`` and
    ``d2 = -tr[(1-M)^-1 d2M] - tr[((1-M)^-1 dM)^2]``.
    """
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    if n == 0:
        return 0.0, 0.0
    lu = _factor(M)
    X = linalg.lu_solve(lu, np.asarray(dM, dtype=float))
    Y = linalg.lu_solve(lu, np.asarray(d2M, dtype=float))
    d1 = -float(np.trace(X))
    # tr(X X) without forming the product
    d2 = -float(np.trace(Y)) - float(np.sum(X * X.T))
    return d1, d2


def _block_terms(M, dM=None, d2M=None):
    """log det, d1, d2 sharing one factorisation."""
    n = M.shape[0]
    lu = _factor(M)
    diag = np.diag(lu[0])
    swaps = int(np.count_nonzero(lu[1] != np.arange(n)))
    if (-1) ** swaps * int(np.prod(np.sign(diag))) <= 0:
        raise SingularityError("det(1 - M) <= 0: spectral radius of M is not below 1")
    logdet = float(np.sum(np.log(np.abs(diag))))
    if dM is None:
        return logdet, 0.0, 0.0
    X = linalg.lu_solve(lu, dM)
    Y = linalg.lu_solve(lu, d2M)
    return logdet, -float(np.trace(X)), -float(np.trace(Y)) - float(np.sum(X * X.T))


def xi_nodes(spec: QuadratureSpec):
    """Nodes ``xi~`` and weights of the mapped Gauss-Legendre rule on (0, inf)."""
    x, w = special.roots_legendre(spec.n_xi)
    t = 0.5 * (x + 1.0)
    xi = spec.xi_scale * t / (1.0 - t)
    weights = 0.5 * w * spec.xi_scale / (1.0 - t) ** 2
    return xi, weights


def default_workers() -> int:
    """Worker count from ``SPCASIMIR_WORKERS`` or the available CPUs."""
    env = os.environ.get("SPCASIMIR_WORKERS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ValueError(f"SPCASIMIR_WORKERS must be an integer, got {env!r}") from None
        if n < 1:
            raise ValueError("SPCASIMIR_WORKERS must be >= 1")
        return n
    try:
        return max(1, len(os.sched_getaffinity(0)))
    except AttributeError:
        return os.cpu_count() or 1


def _frequency_node(xi_tilde, geometry, sphere, plate, spec, ell_max, with_derivatives, m_values):
    """Per-m (log det, d1, d2) at one frequency node."""
    data = frequency_data(xi_tilde, geometry, sphere, plate, spec, ell_max)
    out = np.zeros((len(m_values), 3))
    for i, m in enumerate(m_values):
        block = assemble_block(m, xi_tilde, geometry, sphere, plate, spec, ell_max, with_derivatives, data=data)
        out[i] = _block_terms(block.matrix, block.dM_dL, block.d2M_dL2)
    return out


def _spectral_table(geometry, sphere, plate, ell_max, spec, with_derivatives, workers, m_values=None):
    """Array (n_xi, n_m, 3) of per-node block terms and the node weights."""
    if int(ell_max) != ell_max or ell_max < 1:
        raise ValueError(f"ell_max must be an integer >= 1, got {ell_max!r}")
    ell_max = int(ell_max)
    if m_values is None:
        m_values = tuple(range(ell_max + 1))
    xi, weights = xi_nodes(spec)

    def work(xt):
        return _frequency_node(float(xt), geometry, sphere, plate, spec, ell_max, with_derivatives, m_values)

    workers = default_workers() if workers is None else int(workers)
    if workers < 1:
        raise ValueError("workers must be >= 1")
    if workers == 1:
        rows = [work(xt) for xt in xi]
    else:
        # map preserves node order, so the reduction below is order-fixed
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(work, xi))
    table = np.stack(rows)
    if not np.all(np.isfinite(table)):
        raise ConvergenceError("non-finite integrand encountered")
    return table, weights, m_values


def _reduce(table, weights, m_values):
    """Frequency integral per m, scaled by 1/(2 pi) and the +-m multiplicity."""
    mult = np.array([1.0 if m == 0 else 2.0 for m in m_values])
    per_m = np.einsum("i,imk->mk", weights, table) / (2.0 * math.pi)
    return per_m * mult[:, None]


@dataclass(frozen=True)
class CasimirResult:
    """Energy (J), force (N) and gradient (N/m) with diagnostics.

    ``per_m`` lists ``(m, energy contribution)`` with the factor 2 for
    ``m >= 1`` included. ``force`` and ``gradient`` are ``None`` for
    energy-only runs. ``fd_check`` holds the finite-difference comparison
    when requested.
    """

    energy: float
    energy_dimensionless: float
    per_m: tuple
    ell_max_used: int
    est_rel_err: float
    quadrature: QuadratureSpec
    geometry: Geometry
    sphere: Material
    plate: Material
    force: float | None = None
    gradient: float | None = None
    fd_check: dict | None = field(default=None, compare=False)

    def as_dict(self) -> dict:
        return {
            "energy_J": self.energy,
            "force_N": self.force,
            "gradient_N_per_m": self.gradient,
            "energy_dimensionless": self.energy_dimensionless,
            "ell_max": self.ell_max_used,
            "est_rel_err": self.est_rel_err,
            "per_m": [[m, e] for m, e in self.per_m],
            "quadrature": self.quadrature.as_dict(),
        }


def _energy_only(geometry, sphere, plate, ell_max, spec, workers) -> float:
    table, weights, m_values = _spectral_table(geometry, sphere, plate, ell_max, spec, False, workers)
    per_m = _reduce(table, weights, m_values)
    return float(np.sum(per_m[:, 0])) * HBAR_C / geometry.center_distance


def _error_estimate(energy, geometry, sphere, plate, ell_max, spec, workers) -> float:
    finer = _energy_only(geometry, sphere, plate, ell_max, spec.doubled(), workers)
    higher = _energy_only(geometry, sphere, plate, ell_max + 4, spec, workers)
    return max(abs(finer - energy), abs(higher - energy)) / abs(energy)


def _compute(geometry, sphere, plate, ell_max, spec, workers, with_derivatives, estimate_error):
    spec = spec or QuadratureSpec()
    table, weights, m_values = _spectral_table(geometry, sphere, plate, ell_max, spec, with_derivatives, workers)
    per_m = _reduce(table, weights, m_values)
    Lc = geometry.center_distance
    e_dimless = float(np.sum(per_m[:, 0]))
    energy = e_dimless * HBAR_C / Lc
    if not energy < 0.0:
        raise ConvergenceError(f"energy is not negative ({energy!r}); quadrature or truncation is inadequate")
    force = gradient = None
    if with_derivatives:
        force = float(np.sum(per_m[:, 1])) * HBAR_C / Lc**2
        gradient = -float(np.sum(per_m[:, 2])) * HBAR_C / Lc**3
    err = float("nan")
    if estimate_error:
        err = _error_estimate(energy, geometry, sphere, plate, ell_max, spec, workers)
    per = tuple((int(m), float(v) * HBAR_C / Lc) for m, v in zip(m_values, per_m[:, 0]))
    return CasimirResult(
        energy=energy,
        energy_dimensionless=e_dimless,
        per_m=per,
        ell_max_used=int(ell_max),
        est_rel_err=err,
        quadrature=spec,
        geometry=geometry,
        sphere=sphere,
        plate=plate,
        force=force,
        gradient=gradient,
    )


def casimir_energy(
    geometry: Geometry,
    sphere: Material,
    plate: Material,
    ell_max: int,
    spec: QuadratureSpec | None = None,
    workers: int | None = 1,
    estimate_error: bool = True,
) -> CasimirResult:
    """Sphere-plane Casimir energy at zero temperature.

    ``E = (hbar c / Lc) sum_m w_m int dxi~/(2 pi) log det(1 - M^(m))`` with
    ``w_0 = 1`` and ``w_m = 2`` otherwise. With ``estimate_error`` the
    energy is recomputed with doubled node counts and with ``ell_max + 4``;
    the larger relative change is ``est_rel_err`` (NaN when skipped).
    """
    return _compute(geometry, sphere, plate, ell_max, spec, workers, False, estimate_error)


def _fd_check(geometry, sphere, plate, ell_max, spec, workers, step):
    h = step * geometry.L
    energies = []
    for k in (-2, -1, 1, 2):
        g = Geometry(geometry.R, geometry.L + k * h)
        energies.append(_energy_only(g, sphere, plate, ell_max, spec, workers))
    e0 = _energy_only(geometry, sphere, plate, ell_max, spec, workers)
    em2, em1, ep1, ep2 = energies
    dE = (em2 - 8.0 * em1 + 8.0 * ep1 - ep2) / (12.0 * h)
    d2E = (-em2 + 16.0 * em1 - 30.0 * e0 + 16.0 * ep1 - ep2) / (12.0 * h * h)
    return dE, -d2E


def casimir_force_gradient(
    geometry: Geometry,
    sphere: Material,
    plate: Material,
    ell_max: int,
    spec: QuadratureSpec | None = None,
    workers: int | None = 1,
    estimate_error: bool = True,
    fd_check: bool = False,
    fd_step: float = 1e-3,
) -> CasimirResult:
    """Energy, force and gradient from the trace formulas on the same nodes.

    With ``fd_check`` the force and gradient are recomputed from 5-point
    stencils of the energy (step ``fd_step * L``) and the relative
    discrepancies are stored in ``fd_check``.
    """
    spec = spec or QuadratureSpec()
    res = _compute(geometry, sphere, plate, ell_max, spec, workers, True, estimate_error)
    if res.force <= 0.0 or res.gradient <= 0.0:
        raise ConvergenceError("force or gradient is not positive; quadrature or truncation is inadequate")
    if fd_check:
        f_fd, g_fd = _fd_check(geometry, sphere, plate, ell_max, spec, workers, fd_step)
        check = {
            "force_fd": f_fd,
            "gradient_fd": g_fd,
            "force_rel_diff": abs(f_fd - res.force) / abs(res.force),
            "gradient_rel_diff": abs(g_fd - res.gradient) / abs(res.gradient),
        }
        res = replace(res, fd_check=check)
    return res


@dataclass(frozen=True)
class LmaxChoice:
    """Outcome of :func:`adaptive_lmax`. ``int(choice)`` gives ``ell_max``."""

    ell_max: int
    converged: bool
    residual: float
    energy: float
    history: tuple = ()

    def __int__(self) -> int:
        return self.ell_max

    def __index__(self) -> int:
        return self.ell_max


def adaptive_lmax(
    geometry: Geometry,
    sphere: Material,
    plate: Material,
    target_rel_err: float,
    spec: QuadratureSpec | None = None,
    start: int = 4,
    step: int = 4,
    cap: int = 40,
    workers: int | None = 1,
) -> LmaxChoice:
    """Smallest ``ell_max`` (in steps of ``step``) whose energy moves by less
    than ``target_rel_err`` when ``ell_max`` grows by ``step``.

    Hitting ``cap`` returns the cap with ``converged=False`` and the last
    residual instead of raising.
    """
    if not (1e-8 < target_rel_err < 1e-1):
        raise ValueError(f"target_rel_err must lie in (1e-8, 1e-1), got {target_rel_err!r}")
    if start < 1 or step < 1 or cap < start:
        raise ValueError("need 1 <= start <= cap and step >= 1")
    spec = spec or QuadratureSpec()
    ell = start
    prev = _energy_only(geometry, sphere, plate, ell, spec, workers)
    history = [(ell, prev)]
    residual = math.inf
    while ell + step <= cap:
        nxt = _energy_only(geometry, sphere, plate, ell + step, spec, workers)
        history.append((ell + step, nxt))
        residual = abs(nxt - prev) / abs(nxt)
        if residual < target_rel_err:
            return LmaxChoice(ell, True, residual, prev, tuple(history))
        ell += step
        prev = nxt
    return LmaxChoice(ell, False, residual, prev, tuple(history))
