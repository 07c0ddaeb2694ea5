"""Command-line front end.

Subcommands ``energy``, ``scan``, ``fit`` and ``pfa``. Settings come from an
optional JSON config file (``--config``) and from flags; flags win. Lengths
accept the suffixes ``nm``, ``um`` and ``m`` (bare numbers are metres).

Config keys::

    command            energy | scan | fit | pfa
    R                  sphere radius
    L                  surface gap (energy, pfa)
    x_grid             list of L/R, or "lo:hi:step" (scan, pfa)
    sphere, plate      "perfect", "gold", "plasma:<length>" or
                       {"kind": "plasma", "lambda_P": <length>}
    ell_max            fixed truncation (default: adaptive)
    target_rel_err     adaptive truncation target (default 1e-3)
    n_xi, n_k, xi_scale
    allow_unvalidated  allow x < 0.15 in scans
    input, column, window   fit input file, "rho_F"/"rho_G", [lo, hi]
    out, format        output path (default stdout), "csv" or "json"
    workers            thread count (default: SPCASIMIR_WORKERS or CPU count)

Exit codes: 0 success, 2 configuration error, 3 convergence failure,
4 internal error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import re
import sys
from dataclasses import asdict, dataclass, field, fields
from decimal import Decimal

import numpy as np

from .analysis import DEFAULT_WINDOW, MIN_VALIDATED_X, beta_report, fit_arrays, rho_scan
from .errors import ConfigError, ConvergenceError, DomainError, FitError, SingularityError
from .materials import Material
from .pfa import pfa_estimates, rho_factors
from .roundtrip import Geometry, QuadratureSpec
from .spectrum import adaptive_lmax, casimir_force_gradient, default_workers

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CONVERGENCE = 3
EXIT_INTERNAL = 4

COMMANDS = ("energy", "scan", "fit", "pfa")

CSV_COLUMNS = (
    "x",
    "L_m",
    "R_m",
    "lambdaP_sphere_m",
    "lambdaP_plate_m",
    "energy_J",
    "force_N",
    "gradient_N_per_m",
    "rho_F",
    "rho_G",
    "eta_E",
    "eta_F",
    "ell_max",
    "est_rel_err",
)

PFA_COLUMNS = (
    "x",
    "L_m",
    "R_m",
    "lambdaP_sphere_m",
    "lambdaP_plate_m",
    "eta_E",
    "eta_F",
    "F_pfa_N",
    "G_pfa_N_per_m",
)

_UNITS = {"nm": "1e-9", "um": "1e-6", "µm": "1e-6", "m": "1"}
_LENGTH_RE = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*(nm|um|µm|m)?\s*$")


def parse_length(value) -> float:
    """Length in metres from a number or a string like ``"136nm"``."""
    if isinstance(value, bool):
        raise ConfigError(f"invalid length {value!r}")
    if isinstance(value, (int, float)):
        out = float(value)
    else:
        mt = _LENGTH_RE.match(str(value))
        if not mt:
            raise ConfigError(f"invalid length {value!r}")
        # exact decimal scaling, so "100nm" is the double nearest 1e-7
        out = float(Decimal(mt.group(1)) * Decimal(_UNITS[mt.group(2) or "m"]))
    if not (out > 0.0 and math.isfinite(out)):
        raise ConfigError(f"length must be positive, got {value!r}")
    return out


def parse_material(value) -> Material:
    if isinstance(value, Material):
        return value
    if isinstance(value, dict):
        unknown = set(value) - {"kind", "lambda_P"}
        if unknown:
            raise ConfigError(f"unknown material key {sorted(unknown)[0]!r}")
        kind = value.get("kind")
        if kind == "perfect":
            if "lambda_P" in value:
                raise ConfigError("perfect material takes no lambda_P")
            return Material.perfect()
        if kind == "plasma":
            if "lambda_P" not in value:
                raise ConfigError("missing key 'lambda_P' for plasma material")
            return Material.plasma(parse_length(value["lambda_P"]))
        raise ConfigError(f"unknown material kind {kind!r}")
    text = str(value).strip().lower()
    if text == "perfect":
        return Material.perfect()
    if text == "gold":
        return Material.plasma(136e-9)
    if text.startswith("plasma:"):
        return Material.plasma(parse_length(text.split(":", 1)[1]))
    raise ConfigError(f"invalid material {value!r}")


def parse_grid(value) -> tuple:
    """``[0.4, 0.5]``, ``"0.4,0.5"`` or the inclusive range ``"0.4:0.8:0.05"``."""
    if isinstance(value, str):
        if ":" in value:
            try:
                lo, hi, step = (float(p) for p in value.split(":"))
            except ValueError:
                raise ConfigError(f"invalid x_grid {value!r}") from None
            if not step > 0 or hi < lo:
                raise ConfigError(f"invalid x_grid range {value!r}")
            n = int(math.floor((hi - lo) / step + 1e-9)) + 1
            return tuple(round(lo + k * step, 12) for k in range(n))
        parts = [p for p in value.split(",") if p.strip()]
    else:
        parts = list(value)
    try:
        grid = tuple(float(p) for p in parts)
    except (TypeError, ValueError):
        raise ConfigError(f"invalid x_grid {value!r}") from None
    if any(not (x > 0 and math.isfinite(x)) for x in grid):
        raise ConfigError("x_grid values must be positive")
    grid = tuple(sorted(grid))
    if any(b == a for a, b in zip(grid, grid[1:])):
        raise ConfigError("x_grid contains duplicates")
    return grid


def _material_dict(m: Material):
    if m.is_perfect:
        return {"kind": "perfect"}
    return {"kind": "plasma", "lambda_P": m.plasma_wavelength}


@dataclass(frozen=True)
class RunConfig:
    """Validated settings with every default spelled out."""

    command: str
    R: float | None = None
    L: float | None = None
    x_grid: tuple | None = None
    sphere: Material = field(default_factory=lambda: Material.plasma(136e-9))
    plate: Material = field(default_factory=lambda: Material.plasma(136e-9))
    ell_max: int | None = None
    target_rel_err: float = 1e-3
    n_xi: int = 40
    n_k: int = 60
    xi_scale: float = 1.0
    allow_unvalidated: bool = False
    input: str | None = None
    column: str = "rho_G"
    window: tuple = DEFAULT_WINDOW
    out: str | None = None
    format: str = "csv"
    workers: int = 1

    @property
    def spec(self) -> QuadratureSpec:
        return QuadratureSpec(self.n_xi, self.n_k, self.xi_scale)

    def as_dict(self) -> dict:
        d = asdict(self)
        d["sphere"] = _material_dict(self.sphere)
        d["plate"] = _material_dict(self.plate)
        for key in ("x_grid", "window"):
            if d[key] is not None:
                d[key] = list(d[key])
        return d


_KEYS = {f.name for f in fields(RunConfig)}


def _int(value, key, minimum):
    if isinstance(value, bool):
        raise ConfigError(f"{key} must be an integer")
    try:
        out = int(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key} must be an integer, got {value!r}") from None
    if out != float(value) or out < minimum:
        raise ConfigError(f"{key} must be an integer >= {minimum}, got {value!r}")
    return out


def _float(value, key):
    try:
        out = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key} must be a number, got {value!r}") from None
    if not math.isfinite(out):
        raise ConfigError(f"{key} must be finite")
    return out


def build_config(raw: dict) -> RunConfig:
    """Validate a flat key/value mapping into a :class:`RunConfig`."""
    for key in raw:
        if key not in _KEYS:
            raise ConfigError(f"unknown key {key!r}")
    if "command" not in raw:
        raise ConfigError("missing required key 'command'")
    cmd = raw["command"]
    if cmd not in COMMANDS:
        raise ConfigError(f"invalid command {cmd!r}; expected one of {', '.join(COMMANDS)}")
    kw: dict = {"command": cmd}
    if raw.get("L") is not None and raw.get("x_grid") is not None:
        raise ConfigError("conflicting keys 'L' and 'x_grid': give only one")
    if raw.get("R") is not None:
        kw["R"] = parse_length(raw["R"])
    if raw.get("L") is not None:
        kw["L"] = parse_length(raw["L"])
    if raw.get("x_grid") is not None:
        kw["x_grid"] = parse_grid(raw["x_grid"])
    for key in ("sphere", "plate"):
        if raw.get(key) is not None:
            kw[key] = parse_material(raw[key])
    if raw.get("ell_max") is not None:
        kw["ell_max"] = _int(raw["ell_max"], "ell_max", 1)
    if raw.get("target_rel_err") is not None:
        tol = _float(raw["target_rel_err"], "target_rel_err")
        if not 1e-8 < tol < 1e-1:
            raise ConfigError("target_rel_err must lie in (1e-8, 1e-1)")
        kw["target_rel_err"] = tol
    for key in ("n_xi", "n_k"):
        if raw.get(key) is not None:
            kw[key] = _int(raw[key], key, 8)
    if raw.get("xi_scale") is not None:
        kw["xi_scale"] = _float(raw["xi_scale"], "xi_scale")
        if kw["xi_scale"] <= 0:
            raise ConfigError("xi_scale must be positive")
    if raw.get("allow_unvalidated") is not None:
        if not isinstance(raw["allow_unvalidated"], bool):
            raise ConfigError("allow_unvalidated must be true or false")
        kw["allow_unvalidated"] = raw["allow_unvalidated"]
    for key in ("input", "out"):
        if raw.get(key) is not None:
            kw[key] = str(raw[key])
    if raw.get("column") is not None:
        if raw["column"] not in ("rho_F", "rho_G"):
            raise ConfigError("column must be 'rho_F' or 'rho_G'")
        kw["column"] = raw["column"]
    if raw.get("window") is not None:
        win = raw["window"]
        if isinstance(win, str):
            win = win.replace(":", ",").split(",")
        try:
            lo, hi = (float(v) for v in win)
        except (TypeError, ValueError):
            raise ConfigError(f"window must be two numbers, got {raw['window']!r}") from None
        if not lo < hi:
            raise ConfigError("window must satisfy lo < hi")
        kw["window"] = (lo, hi)
    if raw.get("format") is not None:
        if raw["format"] not in ("csv", "json"):
            raise ConfigError("format must be 'csv' or 'json'")
        kw["format"] = raw["format"]
    if raw.get("workers") is not None:
        kw["workers"] = _int(raw["workers"], "workers", 1)
    else:
        try:
            kw["workers"] = default_workers()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    # per-command requirements
    if cmd in ("energy", "scan", "pfa") and "R" not in kw:
        raise ConfigError("missing required key 'R'")
    if cmd == "energy" and "L" not in kw:
        raise ConfigError("missing required key 'L'")
    if cmd == "scan" and "x_grid" not in kw:
        raise ConfigError("missing required key 'x_grid'")
    if cmd == "pfa" and "L" not in kw and "x_grid" not in kw:
        raise ConfigError("missing required key 'L' or 'x_grid'")
    if cmd == "fit" and "input" not in kw:
        raise ConfigError("missing required key 'input'")
    return RunConfig(**kw)


def parse_config(source: str | None = None, overrides: dict | None = None) -> RunConfig:
    """Parse a JSON config document; entries of ``overrides`` replace file
    values (``None`` values are ignored)."""
    raw: dict = {}
    if source is not None and source.strip():
        try:
            raw = json.loads(source)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
    for key, value in (overrides or {}).items():
        if value is not None:
            raw[key] = value
    # a flag for L replaces a file x_grid and vice versa
    if overrides:
        if overrides.get("L") is not None and overrides.get("x_grid") is None:
            raw.pop("x_grid", None)
        if overrides.get("x_grid") is not None and overrides.get("L") is None:
            raw.pop("L", None)
    return build_config(raw)


# --------------------------------------------------------------------------
# output


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _json_value(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def render(rows, columns, fmt: str, extra: dict | None = None) -> str:
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in columns])
        return buf.getvalue()
    doc = {"rows": [{c: _json_value(row[c]) for c in columns} for row in rows]}
    if extra:
        doc.update(extra)
    return json.dumps(doc, indent=2) + "\n"


def _echo(config: RunConfig) -> dict:
    """Config recorded in JSON output; the worker count is left out so the
    output does not depend on it."""
    d = config.as_dict()
    del d["workers"]
    return d


def _lambda(m: Material):
    return m.plasma_wavelength


def _emit(text: str, config: RunConfig, summary: str) -> None:
    if config.out:
        with open(config.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        print(summary)
    else:
        sys.stdout.write(text)
        print(summary, file=sys.stderr)


def _run_energy(config: RunConfig) -> None:
    g = Geometry(config.R, config.L)
    spec = config.spec
    ell_max = config.ell_max
    if ell_max is None:
        ell_max = adaptive_lmax(g, config.sphere, config.plate, config.target_rel_err, spec, workers=config.workers).ell_max
    res = casimir_force_gradient(g, config.sphere, config.plate, ell_max, spec, workers=config.workers)
    pfa = pfa_estimates(g, config.sphere, config.plate)
    rho_F, rho_G = rho_factors(res, pfa)
    row = {
        "x": g.x,
        "L_m": g.L,
        "R_m": g.R,
        "lambdaP_sphere_m": _lambda(config.sphere),
        "lambdaP_plate_m": _lambda(config.plate),
        "energy_J": res.energy,
        "force_N": res.force,
        "gradient_N_per_m": res.gradient,
        "rho_F": rho_F,
        "rho_G": rho_G,
        "eta_E": pfa.eta_E,
        "eta_F": pfa.eta_F,
        "ell_max": res.ell_max_used,
        "est_rel_err": res.est_rel_err,
    }
    extra = {"per_m": [[m, e] for m, e in res.per_m], "config": _echo(config)}
    summary = (
        f"energy: E={res.energy!r} J F={res.force!r} N G={res.gradient!r} N/m "
        f"est_rel_err={res.est_rel_err:.3g} ell_max={res.ell_max_used}"
    )
    _emit(render([row], CSV_COLUMNS, config.format, extra), config, summary)


def _run_scan(config: RunConfig) -> None:
    low = [x for x in config.x_grid if x < MIN_VALIDATED_X]
    if low and not config.allow_unvalidated:
        raise ConfigError(f"x = {low[0]} is below the validated range x >= {MIN_VALIDATED_X}; use --allow-unvalidated")
    table = rho_scan(
        config.R,
        config.sphere,
        config.plate,
        config.x_grid,
        config.target_rel_err,
        ell_max=config.ell_max,
        spec=config.spec,
        allow_unvalidated=config.allow_unvalidated,
        workers=config.workers,
    )
    rows = []
    errors = []
    for r in table.rows:
        if r.error:
            errors.append({"x": r.x, "error": r.error})
        rows.append(
            {
                "x": r.x,
                "L_m": r.x * config.R,
                "R_m": config.R,
                "lambdaP_sphere_m": _lambda(config.sphere),
                "lambdaP_plate_m": _lambda(config.plate),
                "energy_J": r.energy,
                "force_N": r.force,
                "gradient_N_per_m": r.gradient,
                "rho_F": r.rho_F,
                "rho_G": r.rho_G,
                "eta_E": r.eta_E,
                "eta_F": r.eta_F,
                "ell_max": r.ell_max_used,
                "est_rel_err": r.est_rel_err,
            }
        )
    extra = {"errors": errors, "config": _echo(config)}
    summary = f"scan: {len(rows)} rows, {len(errors)} failed"
    _emit(render(rows, CSV_COLUMNS, config.format, extra), config, summary)
    if errors:
        raise ConvergenceError(f"{len(errors)} scan rows failed; first: x={errors[0]['x']}: {errors[0]['error']}")


def read_table(path: str) -> dict:
    """Columns of a scan output (CSV or JSON) as float arrays."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    if text.lstrip().startswith("{"):
        doc = json.loads(text)
        rows = doc["rows"]
        cols = rows[0].keys() if rows else CSV_COLUMNS
        return {c: np.array([math.nan if r[c] is None else float(r[c]) for r in rows]) for c in cols}
    reader = csv.DictReader(io.StringIO(text))
    rows = list(reader)
    cols = reader.fieldnames or []
    return {c: np.array([float(r[c]) if r[c] != "" else math.nan for r in rows]) for c in cols}


def _run_fit(config: RunConfig) -> None:
    try:
        data = read_table(config.input)
    except FileNotFoundError:
        raise ConfigError(f"input file not found: {config.input}") from None
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"cannot read scan table {config.input}: {exc}") from None
    for c in ("x", config.column):
        if c not in data:
            raise ConfigError(f"input lacks column {c!r}")
    fit = fit_arrays(data["x"], data[config.column], config.window, config.column)
    report = beta_report([fit])
    doc = fit.as_dict()
    doc["report"] = report.as_dict()
    text = json.dumps(doc, indent=2) + "\n"
    entry = report.entries[0]
    summary = f"fit: {fit.column} beta={fit.beta!r} |beta|<{report.bound}: {entry.within_bound} n={fit.n_points}"
    _emit(text, config, summary)


def _run_pfa(config: RunConfig) -> None:
    xs = config.x_grid if config.x_grid is not None else (config.L / config.R,)
    rows = []
    for x in xs:
        L = config.L if config.x_grid is None else x * config.R
        p = pfa_estimates(Geometry(config.R, L), config.sphere, config.plate)
        rows.append(
            {
                "x": L / config.R,
                "L_m": L,
                "R_m": config.R,
                "lambdaP_sphere_m": _lambda(config.sphere),
                "lambdaP_plate_m": _lambda(config.plate),
                "eta_E": p.eta_E,
                "eta_F": p.eta_F,
                "F_pfa_N": p.F_pfa,
                "G_pfa_N_per_m": p.G_pfa,
            }
        )
    summary = f"pfa: {len(rows)} rows, eta_E={rows[0]['eta_E']!r} eta_F={rows[0]['eta_F']!r} at x={rows[0]['x']!r}"
    _emit(render(rows, PFA_COLUMNS, config.format, {"config": _echo(config)}), config, summary)


_RUNNERS = {"energy": _run_energy, "scan": _run_scan, "fit": _run_fit, "pfa": _run_pfa}


def execute(config: RunConfig) -> int:
    """Run a validated configuration and return the exit status."""
    try:
        _RUNNERS[config.command](config)
    except (ConfigError, DomainError, FitError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConvergenceError, SingularityError) as exc:
        print(f"convergence failure: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - the CLI reports everything else as internal
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spcasimir", description="Sphere-plane Casimir energy, force and gradient.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file; flags override its values")
        p.add_argument("--out", help="output file (default: stdout)")
        p.add_argument("--format", choices=("csv", "json"))
        p.add_argument("--workers", type=int, help="worker threads (default: SPCASIMIR_WORKERS or CPU count)")

    def physics(p):
        p.add_argument("--R", dest="R", help="sphere radius, e.g. 100nm")
        p.add_argument("--sphere", help="perfect, gold or plasma:<lambda_P>")
        p.add_argument("--plate", help="perfect, gold or plasma:<lambda_P>")
        p.add_argument("--lmax", dest="ell_max", type=int, help="fixed multipole truncation (default: adaptive)")
        p.add_argument("--tol", dest="target_rel_err", type=float, help="target relative error for adaptive ell_max")
        p.add_argument("--n-xi", dest="n_xi", type=int)
        p.add_argument("--n-k", dest="n_k", type=int)
        p.add_argument("--xi-scale", dest="xi_scale", type=float)

    p = sub.add_parser("energy", help="energy, force and gradient at one gap")
    common(p)
    physics(p)
    p.add_argument("--L", dest="L", help="surface gap, e.g. 50nm")

    p = sub.add_parser("scan", help="rho_F and rho_G over a grid of L/R")
    common(p)
    physics(p)
    p.add_argument("--x-grid", dest="x_grid", help='"0.4:0.8:0.05" or "0.4,0.5,0.6"')
    p.add_argument("--allow-unvalidated", dest="allow_unvalidated", action="store_true", default=None)

    p = sub.add_parser("fit", help="constrained quartic fit of a scan table")
    common(p)
    p.add_argument("--input", help="scan output (CSV or JSON)")
    p.add_argument("--column", choices=("rho_F", "rho_G"))
    p.add_argument("--window", nargs=2, type=float, metavar=("LO", "HI"))

    p = sub.add_parser("pfa", help="plane-plane reflectivity factors and PFA estimates")
    common(p)
    physics(p)
    p.add_argument("--L", dest="L")
    p.add_argument("--x-grid", dest="x_grid")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    opts = vars(args)
    config_path = opts.pop("config", None)
    try:
        source = None
        if config_path:
            try:
                with open(config_path, encoding="utf-8") as fh:
                    source = fh.read()
            except OSError as exc:
                raise ConfigError(f"cannot read config {config_path}: {exc}") from None
            try:
                file_cmd = json.loads(source).get("command")
            except (json.JSONDecodeError, AttributeError):
                file_cmd = None
            if file_cmd is not None and file_cmd != opts["command"]:
                raise ConfigError(f"config command {file_cmd!r} differs from subcommand {opts['command']!r}")
        config = parse_config(source, opts)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return execute(config)


if __name__ == "__main__":
    sys.exit(main())
