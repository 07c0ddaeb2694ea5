"""Scans of the beyond-PFA factors over L/R and constrained quartic fits.

The fits model ``rho(x) = 1 + c1 x + c2 x^2 + c3 x^3 + c4 x^4`` with the
constant pinned to 1 (PFA is exact as ``x -> 0``); ``beta = c1``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import CasimirError, FitError
from .materials import Material
from .pfa import pfa_estimates, rho_factors
from .roundtrip import Geometry, QuadratureSpec
from .spectrum import adaptive_lmax, casimir_force_gradient, default_workers

MIN_VALIDATED_X = 0.15
BETA_G_BOUND = 0.4
DEFAULT_WINDOW = (0.4, 0.8)

ROW_FIELDS = (
    "x",
    "rho_F",
    "rho_G",
    "eta_E",
    "eta_F",
    "energy",
    "force",
    "gradient",
    "ell_max_used",
    "est_rel_err",
)


@dataclass(frozen=True)
class RhoRow:
    """One scan point. Failed points keep NaN values and an ``error`` text."""

    x: float
    rho_F: float = math.nan
    rho_G: float = math.nan
    eta_E: float = math.nan
    eta_F: float = math.nan
    energy: float = math.nan
    force: float = math.nan
    gradient: float = math.nan
    ell_max_used: int = 0
    est_rel_err: float = math.nan
    validated: bool = True
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass(frozen=True)
class RhoTable:
    R: float
    sphere: Material
    plate: Material
    rows: tuple = ()

    def __post_init__(self):
        xs = [r.x for r in self.rows]
        if any(not x > 0.0 for x in xs):
            raise ValueError("all x must be positive")
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise ValueError("rows must be strictly increasing in x")

    def __len__(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> np.ndarray:
        if name not in ROW_FIELDS:
            raise KeyError(name)
        return np.array([getattr(r, name) for r in self.rows], dtype=float)


def _row(R, x, sphere, plate, target_rel_err, ell_max, spec, estimate_error, validated):
    geometry = Geometry.from_ratio(R, x)
    try:
        if ell_max is None:
            ell_max = adaptive_lmax(geometry, sphere, plate, target_rel_err, spec).ell_max
        res = casimir_force_gradient(geometry, sphere, plate, ell_max, spec, workers=1, estimate_error=estimate_error)
        pfa = pfa_estimates(geometry, sphere, plate)
        rho_F, rho_G = rho_factors(res, pfa)
    except CasimirError as exc:
        return RhoRow(x=x, ell_max_used=int(ell_max or 0), validated=validated, error=f"{type(exc).__name__}: {exc}")
    return RhoRow(
        x=x,
        rho_F=rho_F,
        rho_G=rho_G,
        eta_E=pfa.eta_E,
        eta_F=pfa.eta_F,
        energy=res.energy,
        force=res.force,
        gradient=res.gradient,
        ell_max_used=res.ell_max_used,
        est_rel_err=res.est_rel_err,
        validated=validated,
    )


def rho_scan(
    R: float,
    sphere: Material,
    plate: Material,
    x_grid,
    target_rel_err: float = 1e-3,
    *,
    ell_max: int | None = None,
    spec: QuadratureSpec | None = None,
    allow_unvalidated: bool = False,
    estimate_error: bool = True,
    workers: int | None = 1,
) -> RhoTable:
    """Compute one :class:`RhoRow` per ``x = L/R``.

    ``ell_max`` is chosen per row by :func:`adaptive_lmax` unless fixed.
    Points below ``x = 0.15`` are refused unless ``allow_unvalidated`` is set,
    in which case they are marked ``validated=False``. Rows run concurrently
    on ``workers`` threads; a failing row records its error and the scan
    goes on.
    """
    xs = sorted(float(x) for x in x_grid)
    if any(b == a for a, b in zip(xs, xs[1:])):
        raise ValueError("x grid contains duplicates")
    if any(not x > 0.0 for x in xs):
        raise ValueError("x values must be positive")
    low = [x for x in xs if x < MIN_VALIDATED_X]
    if low and not allow_unvalidated:
        raise ValueError(f"x = {low[0]} is below the validated range x >= {MIN_VALIDATED_X}; pass allow_unvalidated=True to force")
    spec = spec or QuadratureSpec()

    def work(x):
        return _row(R, x, sphere, plate, target_rel_err, ell_max, spec, estimate_error, x >= MIN_VALIDATED_X)

    workers = default_workers() if workers is None else int(workers)
    if workers > 1 and len(xs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(work, xs))
    else:
        rows = [work(x) for x in xs]
    return RhoTable(R, sphere, plate, tuple(rows))


@dataclass(frozen=True)
class FitResult:
    """Quartic fit ``1 + c1 x + ... + c4 x^4``; ``x``/``y`` keep the full
    source data so windows can be shifted later."""

    coefficients: tuple
    beta: float
    window: tuple
    rms_residual: float
    n_points: int
    column: str = "rho_G"
    x: tuple = field(default=(), repr=False)
    y: tuple = field(default=(), repr=False)
    weights: tuple | None = field(default=None, repr=False)

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        return 1.0 + sum(c * x ** (k + 1) for k, c in enumerate(self.coefficients))

    def as_dict(self) -> dict:
        return {
            "column": self.column,
            "coefficients": list(self.coefficients),
            "beta": self.beta,
            "window": list(self.window),
            "rms_residual": self.rms_residual,
            "n_points": self.n_points,
        }


_WINDOW_SLACK = 1e-9


def fit_arrays(x, y, window=DEFAULT_WINDOW, column: str = "rho_G", weights=None) -> FitResult:
    """Constrained quartic fit of ``y`` against ``x`` inside ``window``.

    Points with non-finite ``y`` are skipped. ``weights`` (optional) multiply
    the residuals.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError("x and y differ in length")
    lo, hi = float(window[0]), float(window[1])
    if not lo < hi:
        raise ValueError(f"empty fit window {window!r}")
    sel = (x >= lo - _WINDOW_SLACK) & (x <= hi + _WINDOW_SLACK) & np.isfinite(y)
    w = None
    if weights is not None:
        w = np.asarray(weights, dtype=float)
        sel &= np.isfinite(w) & (w > 0)
    n = int(np.count_nonzero(sel))
    if n < 5:
        raise FitError(f"need at least 5 points in window {lo}..{hi}, got {n}")
    xs, ys = x[sel], y[sel]
    A = np.column_stack([xs**k for k in range(1, 5)])
    b = ys - 1.0
    if w is not None:
        A = A * w[sel][:, None]
        b = b * w[sel]
    coef, _, rank, _ = np.linalg.lstsq(A, b, rcond=None)
    if rank < 4:
        raise FitError("degenerate grid: design matrix is rank deficient")
    resid = ys - (1.0 + np.column_stack([xs**k for k in range(1, 5)]) @ coef)
    return FitResult(
        coefficients=tuple(float(c) for c in coef),
        beta=float(coef[0]),
        window=(lo, hi),
        rms_residual=float(np.sqrt(np.mean(resid**2))),
        n_points=n,
        column=column,
        x=tuple(float(v) for v in x),
        y=tuple(float(v) for v in y),
        weights=None if w is None else tuple(float(v) for v in w),
    )


def constrained_quartic_fit(table: RhoTable, column: str = "rho_G", window=DEFAULT_WINDOW, weighted: bool = False) -> FitResult:
    """Fit ``rho_F`` or ``rho_G`` of a scan; ``weighted`` uses ``1/est_rel_err``."""
    if column not in ("rho_F", "rho_G"):
        raise ValueError(f"column must be rho_F or rho_G, got {column!r}")
    weights = None
    if weighted:
        err = table.column("est_rel_err")
        weights = 1.0 / np.maximum(err, 1e-15)
    return fit_arrays(table.column("x"), table.column(column), window, column, weights)


@dataclass(frozen=True)
class BetaEntry:
    column: str
    beta: float
    within_bound: bool
    window: tuple
    sweep: tuple  # ((lo, hi), beta or None)
    spread: float


@dataclass(frozen=True)
class BetaReport:
    bound: float
    entries: tuple

    def as_dict(self) -> dict:
        return {
            "bound": self.bound,
            "entries": [
                {
                    "column": e.column,
                    "beta": e.beta,
                    "within_bound": e.within_bound,
                    "window": list(e.window),
                    "sweep": [{"window": list(w), "beta": b} for w, b in e.sweep],
                    "spread": e.spread,
                }
                for e in self.entries
            ],
        }


def beta_report(fits, bound: float = BETA_G_BOUND, shift: float = 0.1) -> BetaReport:
    """Compare each fitted slope with ``|beta| < bound`` and refit with the
    window shifted by ``-shift`` and ``+shift``.

    Shifted windows with fewer than five points report ``None``. ``spread``
    is the range of all available slopes, the nominal one included.
    """
    fits = list(fits)
    if not fits:
        raise ValueError("beta_report needs at least one fit")
    entries = []
    for fit in fits:
        lo, hi = fit.window
        sweep = []
        betas = [fit.beta]
        for d in (-shift, shift):
            win = (round(lo + d, 12), round(hi + d, 12))
            try:
                b = fit_arrays(fit.x, fit.y, win, fit.column, fit.weights).beta
                betas.append(b)
            except FitError:
                b = None
            sweep.append((win, b))
        entries.append(
            BetaEntry(
                column=fit.column,
                beta=fit.beta,
                within_bound=abs(fit.beta) < bound,
                window=fit.window,
                sweep=tuple(sweep),
                spread=max(betas) - min(betas),
            )
        )
    return BetaReport(bound, tuple(entries))
