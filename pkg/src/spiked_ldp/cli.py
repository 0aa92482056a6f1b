"""Command-line front end: transforms, rate grids, minimizers, Monte Carlo and verification.

Exit codes: 0 success, 1 verification failure, 2 invalid input, 3 I/O failure.
Option values resolve as command-line flag > ``--config`` JSON file > default.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
import warnings
from dataclasses import asdict, replace

import numpy as np

from . import ensembles as ens
from . import rates as R
from . import spectral as sp
from .spherical import j_fast, j_limit

EXIT_OK, EXIT_VERIFY, EXIT_INPUT, EXIT_IO = 0, 1, 2, 3

RATE_COLUMNS = ("x", "u", "rate", "y_star", "regime")
TRANSFORM_COLUMNS = ("point", "quantity", "value")


class InputError(Exception):
    """Invalid command-line or configuration input (exit 2)."""


class OutputError(Exception):
    """A file could not be read or written (exit 3)."""


# ---------------------------------------------------------------------------
# formatting and files

def fmt(v) -> str:
    """CSV number formatting: 9 significant digits."""
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    return f"{float(v):.9g}"


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def json_text(obj) -> str:
    # json renders floats with repr, the shortest string that round-trips
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def write_atomic(path, text: str):
    """Write ``text`` to ``path`` through a temp file in the same directory and rename."""
    path = os.fspath(path)
    folder = os.path.dirname(os.path.abspath(path))
    try:
        fd, tmp = tempfile.mkstemp(dir=folder, prefix=".tmp-", suffix=os.path.basename(path))
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise OutputError(f"cannot write {path}: {exc}") from exc


def emit(text: str, out):
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        write_atomic(out, text)


def read_csv(path) -> list[dict]:
    """Read a CSV written by this CLI; numeric fields come back as floats."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise OutputError(f"cannot read {path}: {exc}") from exc
    out = []
    for row in rows:
        parsed = {}
        for k, v in row.items():
            try:
                parsed[k] = float(v) if v != "" else None
            except ValueError:
                parsed[k] = v
        out.append(parsed)
    return out


def read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise OutputError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path} is not valid JSON: {exc}") from exc


# ---------------------------------------------------------------------------
# configuration

GLOBAL_DEFAULTS = {"seed": 0, "out": None, "threads": 1, "fast": False}

GRID_DEFAULTS = {"x_min": 2.0, "x_max": 5.0, "x_steps": 50, "u_min": 0.0, "u_max": 0.99,
                 "u_steps": 50}

DEFAULTS = {
    "transforms": {"measure": "semicircle", "alpha": 0.5, "density_csv": None,
                   "stieltjes": [], "r_transform": [], "k_inverse": [], "log_potential": [],
                   "j": []},
    "rate-point": {"theta": 3.0, "beta": 1, "x": None, "u": None},
    "rate-grid": {"theta": 3.0, "beta": 1, **GRID_DEFAULTS},
    "rate-surface": {"theta": 3.0, "beta": 1, **GRID_DEFAULTS, "x_steps": 150, "u_steps": 150,
                     "summary": None},
    "rate-multi": {"theta": 3.0, "beta": 1, "xs": None, "us": None},
    "rate-wishart": {"gamma": 2.0, "alpha": 0.5, "beta": 1, "x": None, "u": None,
                     "x_min": None, "x_max": None, "x_steps": 20, "u_min": 0.0, "u_max": 0.99,
                     "u_steps": 20},
    "minimize": {"model": "goe", "theta": 3.0, "beta": 1, "n_pairs": 1, "gamma": 2.0,
                 "alpha": 0.5, "x": None, "x1": None, "u1": None},
    "simulate": {"kind": "goe", "n": 200, "m": None, "alpha": None, "theta": 0.0, "gamma": 0.0,
                 "samples": 10, "beta": 1, "tilt": None, "tilt_window": 0.01,
                 "tilt_method": "point"},
    "verify": {"only": [], "inject_fault": None},
}

TOLERANCE_KEYS = ("grid_step", "refine_tol", "golden_tol", "tie_tol", "x_span")


def _add_global(p):
    g = p.add_argument_group("global options")
    g.add_argument("--config", default=argparse.SUPPRESS, help="JSON file with option values")
    g.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="unsigned 64-bit seed")
    g.add_argument("--out", default=argparse.SUPPRESS, help="output path ('-' for stdout)")
    g.add_argument("--threads", type=int, default=argparse.SUPPRESS)
    g.add_argument("--fast", action="store_true", default=argparse.SUPPRESS,
                   help="reduced grids / sample counts")


def _grid_args(p):
    for k in ("x_min", "x_max", "u_min", "u_max"):
        p.add_argument("--" + k.replace("_", "-"), dest=k, type=float, default=argparse.SUPPRESS)
    for k in ("x_steps", "u_steps"):
        p.add_argument("--" + k.replace("_", "-"), dest=k, type=int, default=argparse.SUPPRESS)


def _opt(p, name, **kw):
    p.add_argument(name, default=argparse.SUPPRESS, **kw)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spiked-ldp",
        description="Large deviations of spiked random matrices: rates, transforms, simulation.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("transforms", help="Stieltjes/R-transform/log-potential/J values")
    _opt(p, "--measure", choices=["semicircle", "mp", "csv"])
    _opt(p, "--alpha", type=float, help="Marchenko-Pastur ratio")
    _opt(p, "--density-csv", dest="density_csv", help="two-column density file for --measure csv")
    _opt(p, "--stieltjes", type=float, action="append", metavar="Z")
    _opt(p, "--r-transform", dest="r_transform", type=float, action="append", metavar="M")
    _opt(p, "--k-inverse", dest="k_inverse", type=float, action="append", metavar="M")
    _opt(p, "--log-potential", dest="log_potential", type=float, action="append", metavar="X")
    _opt(p, "--j", type=float, nargs=2, action="append", metavar=("THETA", "LAMBDA"))
    _add_global(p)

    p = sub.add_parser("rate-point", help="GOE/GUE rate at one (x, u)")
    _opt(p, "--theta", type=float)
    _opt(p, "--beta", type=int)
    _opt(p, "--x", type=float)
    _opt(p, "--u", type=float)
    _add_global(p)

    for name, helptext in (("rate-grid", "GOE/GUE rate on an (x, u) grid"),
                           ("rate-surface", "rate grid plus a JSON summary of the minimum")):
        p = sub.add_parser(name, help=helptext)
        _opt(p, "--theta", type=float)
        _opt(p, "--beta", type=int)
        _grid_args(p)
        if name == "rate-surface":
            _opt(p, "--summary", help="JSON summary path (default: --out with .json)")
        _add_global(p)

    p = sub.add_parser("rate-multi", help="rate of the n largest eigenpairs")
    _opt(p, "--theta", type=float)
    _opt(p, "--beta", type=int)
    _opt(p, "--xs", type=float, nargs="+")
    _opt(p, "--us", type=float, nargs="+")
    _add_global(p)

    p = sub.add_parser("rate-wishart", help="spiked-covariance rate at a point or on a grid")
    _opt(p, "--gamma", type=float)
    _opt(p, "--alpha", type=float)
    _opt(p, "--beta", type=int)
    _opt(p, "--x", type=float)
    _opt(p, "--u", type=float)
    _grid_args(p)
    _add_global(p)

    p = sub.add_parser("minimize", help="global minimizers and constrained minimizers")
    _opt(p, "--model", choices=["goe", "multi", "wishart"])
    _opt(p, "--theta", type=float)
    _opt(p, "--beta", type=int)
    _opt(p, "--n-pairs", dest="n_pairs", type=int)
    _opt(p, "--gamma", type=float)
    _opt(p, "--alpha", type=float)
    _opt(p, "--x", type=float, help="goe: minimize over u at this fixed x")
    _opt(p, "--x1", type=float, help="multi, n=2: fix the top pair and minimize over the second")
    _opt(p, "--u1", type=float)
    _add_global(p)

    p = sub.add_parser("simulate", help="Monte Carlo summary of a spiked ensemble")
    _opt(p, "--kind", choices=["goe", "gue", "wishart"])
    _opt(p, "--n", type=int)
    _opt(p, "--m", type=int)
    _opt(p, "--alpha", type=float, help="wishart: sets m = round(alpha n) when --m is absent")
    _opt(p, "--theta", type=float)
    _opt(p, "--gamma", type=float)
    _opt(p, "--samples", type=int)
    _opt(p, "--beta", type=int)
    _opt(p, "--tilt", type=float, metavar="THETA_PRIME",
         help="also estimate the rate at the THETA_PRIME-typical point by tilting")
    _opt(p, "--tilt-window", dest="tilt_window", type=float)
    _opt(p, "--tilt-method", dest="tilt_method", choices=["point", "conditional", "naive"])
    _add_global(p)

    p = sub.add_parser("verify", help="run the invariant suite")
    _opt(p, "--only", action="append", help="run checks whose name starts with this prefix")
    _opt(p, "--inject-fault", dest="inject_fault", choices=["cprime-sign"])
    _add_global(p)
    return parser


def resolve(ns: argparse.Namespace) -> dict:
    """Merge defaults, the config file and explicit flags (in increasing priority)."""
    cmd = ns.command
    opts = {**GLOBAL_DEFAULTS, **DEFAULTS[cmd]}
    flags = {k: v for k, v in vars(ns).items() if k != "command"}
    tol = {}
    path = flags.pop("config", None)
    if path is not None:
        cfg = read_json(path)
        if not isinstance(cfg, dict):
            raise InputError("config file must hold a JSON object")
        for key, val in cfg.items():
            k = key.replace("-", "_")
            if k in TOLERANCE_KEYS:
                tol[k] = val
            elif k in opts:
                opts[k] = val
            else:
                raise InputError(f"unknown config key {key!r} for {cmd}")
    opts.update(flags)
    opts["rate_config"] = _rate_config(tol)
    return opts


def _rate_config(tol) -> R.RateConfig:
    try:
        cfg = replace(R.DEFAULTS, **{k: float(v) for k, v in tol.items()})
    except (TypeError, ValueError) as exc:
        raise InputError(f"bad tolerance override: {exc}") from exc
    if not (cfg.grid_step > 0 and cfg.refine_tol > 0 and cfg.golden_tol > 0 and cfg.x_span > 0):
        raise InputError("tolerance overrides must be positive")
    return cfg


def _grid(o, x_floor, what):
    for k in ("x_steps", "u_steps"):
        if int(o[k]) < 2:
            raise InputError(f"{k} must be at least 2")
    if o["x_min"] < x_floor:
        raise InputError(f"x_min must be >= {x_floor:g} ({what} edge)")
    if not o["x_max"] > o["x_min"]:
        raise InputError("x_max must exceed x_min")
    if not (0.0 <= o["u_min"] < o["u_max"] <= 1.0):
        raise InputError("need 0 <= u_min < u_max <= 1")
    xs = np.linspace(o["x_min"], o["x_max"], int(o["x_steps"]))
    us = np.linspace(o["u_min"], o["u_max"], int(o["u_steps"]))
    return xs, us


def _rate_row(x, u, pt: R.RatePoint):
    y = None if pt.y_star is None or math.isnan(pt.y_star) else pt.y_star
    return (x, u, pt.value, y, pt.regime or "outside")


# ---------------------------------------------------------------------------
# commands

def _measure(o):
    name = o["measure"]
    if name == "semicircle":
        return sp.semicircle()
    if name == "mp":
        return sp.marchenko_pastur(float(o["alpha"]))
    if o["density_csv"] is None:
        raise InputError("--measure csv needs --density-csv")
    try:
        return sp.from_csv(o["density_csv"])
    except OSError as exc:
        raise OutputError(f"cannot read {o['density_csv']}: {exc}") from exc


def cmd_transforms(o) -> int:
    mu = _measure(o)
    rows = []
    for z in o["stieltjes"] or []:
        rows.append((z, "stieltjes", sp.stieltjes(mu, z)))
    for m in o["r_transform"] or []:
        rows.append((m, "r_transform", sp.r_transform(mu, m)))
    for m in o["k_inverse"] or []:
        rows.append((m, "k_inverse", sp.k_inverse(mu, m)))
    for x in o["log_potential"] or []:
        rows.append((x, "log_potential", sp.log_potential(mu, x)))
    for th, lam in o["j"] or []:
        # quadrature route for generic laws, closed forms otherwise
        val = j_fast(mu, th, lam) if mu.kind != "generic" else j_limit(mu, th, lam).value
        rows.append((f"{fmt(th)};{fmt(lam)}", "j", val))
    if not rows:
        raise InputError("nothing to evaluate: pass --stieltjes, --r-transform, --k-inverse, "
                         "--log-potential or --j")
    emit(csv_text(TRANSFORM_COLUMNS, rows), o["out"])
    return EXIT_OK


def cmd_rate_point(o) -> int:
    if o["x"] is None or o["u"] is None:
        raise InputError("rate-point needs --x and --u")
    q = R.GoeRateQuery(float(o["x"]), float(o["u"]), float(o["theta"]), int(o["beta"]))
    pt = R.rate_goe(q, o["rate_config"])
    emit(csv_text(RATE_COLUMNS, [_rate_row(q.x, q.u, pt)]), o["out"])
    return EXIT_OK


def _goe_grid_rows(o):
    xs, us = _grid(o, 2.0, "semicircle")
    theta, beta, cfg = float(o["theta"]), int(o["beta"]), o["rate_config"]
    rows = []
    for x in xs:
        for u in us:
            rows.append(_rate_row(x, u, R.rate_goe(R.GoeRateQuery(x, u, theta, beta), cfg)))
    return rows


def cmd_rate_grid(o) -> int:
    emit(csv_text(RATE_COLUMNS, _goe_grid_rows(o)), o["out"])
    return EXIT_OK


def cmd_rate_surface(o) -> int:
    if o["fast"]:
        o = {**o, "x_steps": min(int(o["x_steps"]), 60), "u_steps": min(int(o["u_steps"]), 60)}
    rows = _goe_grid_rows(o)
    out = o["out"] or "rate_surface.csv"
    summary_path = o["summary"] or os.path.splitext(out)[0] + ".json"
    theta, beta = float(o["theta"]), int(o["beta"])
    best = min(rows, key=lambda r: r[2])
    g = R.global_min(theta, beta, o["rate_config"])
    at_min = R.rate_goe(R.GoeRateQuery(g.x, g.u, theta, beta), o["rate_config"]).value
    summary = {
        "theta": theta, "beta": beta,
        "grid": {k: o[k] for k in GRID_DEFAULTS},
        "grid_minimum": {"x": float(best[0]), "u": float(best[1]), "rate": float(best[2])},
        "minimum": {"x": g.x, "u": g.u, "rate": at_min, "raw_infimum": g.raw_inf},
    }
    emit(csv_text(RATE_COLUMNS, rows), out)
    write_atomic(summary_path, json_text(summary))
    return EXIT_OK


def cmd_rate_multi(o) -> int:
    if not o["xs"] or not o["us"]:
        raise InputError("rate-multi needs --xs and --us")
    q = R.MultiRateQuery(tuple(map(float, o["xs"])), tuple(map(float, o["us"])),
                         float(o["theta"]), int(o["beta"]))
    pt = R.rate_multi(q, o["rate_config"])
    y = None if pt.y_star is None or math.isnan(pt.y_star) else pt.y_star
    emit(json_text({"xs": list(q.xs), "us": list(q.us), "theta": q.theta, "beta": q.beta,
                    "rate": pt.value, "raw": pt.raw, "y_star": y, "regime": pt.regime}),
         o["out"])
    return EXIT_OK


def cmd_rate_wishart(o) -> int:
    gamma, alpha, beta = float(o["gamma"]), float(o["alpha"]), int(o["beta"])
    edge = sp.marchenko_pastur(alpha).right
    cfg = o["rate_config"]
    if o["x"] is not None or o["u"] is not None:
        if o["x"] is None or o["u"] is None:
            raise InputError("a single Wishart point needs both --x and --u")
        pts = [(float(o["x"]), float(o["u"]))]
    else:
        g = {**o, "x_min": edge if o["x_min"] is None else o["x_min"],
             "x_max": edge + 4.0 if o["x_max"] is None else o["x_max"]}
        xs, us = _grid(g, edge, "Marchenko-Pastur")
        pts = [(x, u) for x in xs for u in us]
    rows = [_rate_row(x, u, R.rate_wishart(R.WishartRateQuery(x, u, gamma, alpha, beta), cfg))
            for x, u in pts]
    emit(csv_text(RATE_COLUMNS, rows), o["out"])
    return EXIT_OK


def cmd_minimize(o) -> int:
    model, cfg = o["model"], o["rate_config"]
    theta, beta = float(o["theta"]), int(o["beta"])
    if model == "goe":
        if o["x"] is not None:
            u, val = R.argmin_u(theta, float(o["x"]), beta, cfg)
            res = {"model": model, "theta": theta, "beta": beta, "x": float(o["x"]), "u": u,
                   "rate": val}
        else:
            g = R.global_min(theta, beta, cfg)
            res = {"model": model, "theta": theta, "beta": beta, "x": g.x, "u": g.u,
                   "raw_infimum": g.raw_inf,
                   "second_eigenvalue": R.second_eig(R.GoeRateQuery(g.x, g.u, theta), cfg)}
    elif model == "multi":
        n = int(o["n_pairs"])
        if n < 1:
            raise InputError("--n-pairs must be at least 1")
        if o["x1"] is not None:
            if n != 2 or o["u1"] is None:
                raise InputError("--x1/--u1 need --n-pairs 2 and both values")
            x2, u2, raw = R.minimize_second(theta, float(o["x1"]), float(o["u1"]), config=cfg)
            res = {"model": model, "theta": theta, "x1": float(o["x1"]), "u1": float(o["u1"]),
                   "x2": x2, "u2": u2, "raw": raw}
        else:
            xs, us, raw = R.multi_global_min(theta, n, cfg, seed=int(o["seed"]))
            res = {"model": model, "theta": theta, "n_pairs": n, "xs": list(xs),
                   "us": list(us), "raw_infimum": raw}
    else:
        gamma, alpha = float(o["gamma"]), float(o["alpha"])
        g = R.wishart_global_min(gamma, alpha, cfg)
        res = {"model": model, "gamma": gamma, "alpha": alpha, "x": g.x, "u": g.u,
               "raw_infimum": g.raw_inf}
    emit(json_text(res), o["out"])
    return EXIT_OK


def _ensemble_spec(o) -> ens.EnsembleSpec:
    kind, n = o["kind"], int(o["n"])
    m = o["m"]
    if kind == "wishart" and m is None:
        if o["alpha"] is None:
            raise InputError("wishart needs --m or --alpha")
        m = int(round(float(o["alpha"]) * n))
    return ens.EnsembleSpec(kind, n, m=None if m is None else int(m), theta=float(o["theta"]),
                            gamma=float(o["gamma"]), seed=int(o["seed"]),
                            samples=int(o["samples"]), beta=int(o["beta"]))


def cmd_simulate(o) -> int:
    spec = _ensemble_spec(o)
    threads = int(o["threads"])
    out = ens.mc_stats(spec, threads=threads).to_json()
    if o["tilt"] is not None:
        tp = float(o["tilt"])
        est = ens.tilted_estimate(spec.theta, tp, spec, window=(float(o["tilt_window"]),) * 2,
                                  method=o["tilt_method"], threads=threads)
        x, u = est.target
        beta = spec.dyson_beta
        model = R.rate_goe(R.GoeRateQuery(x, u, spec.theta, beta), o["rate_config"]).value
        out["tilt"] = {**asdict(est), "target": [x, u], "theta_prime": tp, "rate_goe": model,
                       "z_score": (est.value - model) / est.stderr if est.stderr > 0 else None}
    emit(json_text(out), o["out"])
    return EXIT_OK


def cmd_verify(o) -> int:
    from .verify import run_checks

    fault = o["inject_fault"]
    if fault:
        with R.inject_fault(fault):
            R.clear_cache()
            results = run_checks(fast=bool(o["fast"]), only=o["only"])
        R.clear_cache()
    else:
        results = run_checks(fast=bool(o["fast"]), only=o["only"])
    width = max(len(r.name) for r in results) if results else 10
    lines = [f"{'check':<{width}}  status  seconds  detail"]
    for r in results:
        lines.append(f"{r.name:<{width}}  {'PASS' if r.passed else 'FAIL':<6}  "
                     f"{r.seconds:7.2f}  {r.detail}")
    failed = [r.name for r in results if not r.passed]
    lines.append(f"{len(results) - len(failed)}/{len(results)} passed"
                 + (f"; failed: {', '.join(failed)}" if failed else ""))
    text = "\n".join(lines) + "\n"
    if o["out"] not in (None, "-"):
        write_atomic(o["out"], text)
    sys.stdout.write(text)
    return EXIT_VERIFY if failed else EXIT_OK


COMMANDS = {
    "transforms": cmd_transforms, "rate-point": cmd_rate_point, "rate-grid": cmd_rate_grid,
    "rate-surface": cmd_rate_surface, "rate-multi": cmd_rate_multi,
    "rate-wishart": cmd_rate_wishart, "minimize": cmd_minimize, "simulate": cmd_simulate,
    "verify": cmd_verify,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on bad usage already; keep --help at 0
        return int(exc.code or 0)
    try:
        opts = resolve(ns)
        if not 0 <= int(opts["seed"]) < 2 ** 64:
            raise InputError("--seed must be an unsigned 64-bit integer")
        if int(opts["threads"]) < 1:
            raise InputError("--threads must be at least 1")
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return COMMANDS[ns.command](opts)
    except OutputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (InputError, sp.DomainError, ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
