"""Command-line entry point ``acbound``.

Subcommands::

    acbound family build|verify --config CFG --out DIR [key=value ...]
    acbound ac run|fit         --config CFG --out DIR [key=value ...]
    acbound oracle fano|fixedpoint|net-entropy --out DIR [flags]

Exit codes: 0 success, 1 verification failure, 2 usage or config error.
Trailing ``key=value`` arguments override config fields by dotted path
(``run.m=5000``); values are parsed as JSON when possible.
"""
from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import json
import math
import os
import sys
import tempfile
import time

import numpy as np

from acbound import __version__
from acbound.core import MarginSpec

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

AC_HEADER = ["family_id", "sigma_index", "n", "lambda", "m", "exceed_count", "p_hat", "ci_lo", "ci_hi"]
RATES_HEADER = ["kind", "slope", "intercept", "r2", "n_points", "alpha", "r_prime"]
EXCESS_HEADER = ["family_id", "sigma_index", "n", "m", "mean_excess"]


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------- config

DEFAULTS = {
    "family": {"d": 1, "q": None, "holder": None, "delta": None, "alpha": None, "C": None, "c2": None,
               "code_mode": "exhaustive", "min_hamming": None},
    "classifier": {"kind": "class_erm", "net": None},
    "run": {"n_list": [512], "m": 1000,
            "lambda": {"min": 1.0, "max": 8.0, "points": 8, "scale": "linear", "unit": "cell_excess"},
            "sigma_subset_size": 10, "master_seed": 0, "workers": 1},
    "verify": {"C_M": None, "t_points": 100, "holder": None},
    "fit": {"r_prime": None},
}
NET_KEYS = {"beta", "L", "epsilon", "schedule", "family_codes", "d"}
HOLDER_KEYS = {"beta", "L", "c5"}


def _merge_strict(base, upd, path=""):
    out = copy.deepcopy(base)
    for k, v in upd.items():
        where = f"{path}{k}"
        if k not in base:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(base[k], dict) and k not in ("holder", "net"):
            if not isinstance(v, dict):
                raise ConfigError(f"{where} must be an object")
            out[k] = _merge_strict(base[k], v, where + ".")
        else:
            out[k] = v
    return out


def _set_dotted(doc, dotted, value):
    keys = dotted.split(".")
    cur = doc
    for k in keys[:-1]:
        if not isinstance(cur.get(k), dict):
            cur[k] = {}
        cur = cur[k]
    cur[keys[-1]] = value


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _need(cond, field, msg):
    if not cond:
        raise ConfigError(f"{field}: {msg}")


def _num(x):
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def load_config(path, overrides=()):
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    for ov in overrides:
        if "=" not in ov:
            raise ConfigError(f"override {ov!r} is not key=value")
        k, v = ov.split("=", 1)
        _set_dotted(raw, k, _parse_value(v))
    cfg = _merge_strict(DEFAULTS, raw)
    if os.environ.get("ACBOUND_SEED"):
        try:
            cfg["run"]["master_seed"] = int(os.environ["ACBOUND_SEED"])
        except ValueError as exc:
            raise ConfigError("ACBOUND_SEED must be an integer") from exc
    validate_config(cfg)
    return cfg


def validate_config(cfg):
    fam = cfg["family"]
    for k in ("delta", "alpha", "C", "c2"):
        _need(_num(fam[k]), f"family.{k}", "required number")
    _need(isinstance(fam["d"], int) and fam["d"] >= 1, "family.d", "positive integer")
    _need(0 < fam["delta"] < 1, "family.delta", "must lie in (0, 1)")
    _need(0 < fam["alpha"] < math.inf, "family.alpha", "must be positive and finite")
    _need(0 < fam["C"] <= 1, "family.C", "must lie in (0, 1]")
    _need(0 < fam["c2"] < 0.5, "family.c2", "must lie in (0, 1/2)")
    if fam["holder"] is not None:
        h = fam["holder"]
        _need(isinstance(h, dict) and set(h) <= HOLDER_KEYS and {"beta", "c5"} <= set(h),
              "family.holder", "object with beta, c5 (and optional L)")
        _need(fam["q"] is None, "family.q", "give either q or holder, not both")
    else:
        _need(isinstance(fam["q"], int) and fam["q"] >= 1, "family.q", "positive integer (or give holder)")
    _need(fam["code_mode"] in ("exhaustive", "randomized"), "family.code_mode", "exhaustive or randomized")
    cl = cfg["classifier"]
    _need(cl["kind"] in ("class_erm", "net_erm"), "classifier.kind", "class_erm or net_erm")
    if cl["kind"] == "net_erm":
        _need(isinstance(cl["net"], dict), "classifier.net", "required for net_erm")
        _need(set(cl["net"]) <= NET_KEYS, "classifier.net", f"unknown keys {sorted(set(cl['net']) - NET_KEYS)}")
    run = cfg["run"]
    _need(isinstance(run["n_list"], list) and run["n_list"] and all(isinstance(n, int) and n >= 1 for n in run["n_list"]),
          "run.n_list", "nonempty list of positive integers")
    _need(isinstance(run["m"], int) and run["m"] >= 1, "run.m", "positive integer")
    lam = run["lambda"]
    _need(_num(lam["min"]) and _num(lam["max"]) and 0 <= lam["min"] <= lam["max"], "run.lambda", "0 <= min <= max")
    _need(isinstance(lam["points"], int) and lam["points"] >= 1, "run.lambda.points", "positive integer")
    _need(lam["scale"] in ("linear", "geometric"), "run.lambda.scale", "linear or geometric")
    _need(lam["unit"] in ("absolute", "cell_excess"), "run.lambda.unit", "absolute or cell_excess")
    _need(lam["scale"] == "linear" or lam["min"] > 0, "run.lambda.min", "geometric scale needs min > 0")
    _need(isinstance(run["sigma_subset_size"], int) and run["sigma_subset_size"] >= 1,
          "run.sigma_subset_size", "positive integer")
    _need(isinstance(run["master_seed"], int) and run["master_seed"] >= 0, "run.master_seed", "nonnegative integer")
    _need(isinstance(run["workers"], int) and run["workers"] >= 1, "run.workers", "positive integer")
    ver = cfg["verify"]
    _need(ver["C_M"] is None or (_num(ver["C_M"]) and ver["C_M"] > 0), "verify.C_M", "positive number")
    _need(isinstance(ver["t_points"], int) and ver["t_points"] >= 1, "verify.t_points", "positive integer")


def build_from_config(cfg):
    from acbound.family import build_family, holder_q

    fam = cfg["family"]
    q = fam["q"]
    if fam["holder"] is not None:
        h = fam["holder"]
        q = holder_q(fam["delta"], fam["alpha"], h["beta"], h["c5"])
    try:
        return build_family(fam["d"], q, fam["delta"], fam["alpha"], fam["C"], fam["c2"],
                            code_mode=fam["code_mode"], min_hamming=fam["min_hamming"])
    except ValueError as exc:
        raise ConfigError(f"family: {exc}") from exc


def lambda_grid(cfg, family):
    lam = cfg["run"]["lambda"]
    if lam["scale"] == "linear":
        g = np.linspace(lam["min"], lam["max"], lam["points"])
    else:
        g = np.geomspace(lam["min"], lam["max"], lam["points"])
    return g * family.cell_excess if lam["unit"] == "cell_excess" else g


# ---------------------------------------------------------------- output

def fmt(x):
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def write_atomic(path, text):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def csv_text(header, rows):
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(header)
    for r in rows:
        wr.writerow([fmt(v) for v in r])
    return buf.getvalue()


def json_text(obj):
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


def write_manifest(out, cfg, outputs, started, command):
    sums = {}
    for name in outputs:
        with open(os.path.join(out, name), "rb") as fh:
            sums[name] = hashlib.sha256(fh.read()).hexdigest()
    doc = {"command": command, "config": cfg, "version": __version__,
           "wall_clock_seconds": time.time() - started,
           "finished_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
           "outputs": sums}
    write_atomic(os.path.join(out, "manifest.json"), json_text(doc))


# ---------------------------------------------------------------- commands

def cmd_family(args):
    from acbound.family import verify_family

    cfg = load_config(args.config, args.overrides)
    started = time.time()
    fam = build_from_config(cfg)
    out = args.out
    write_atomic(os.path.join(out, "family.json"), fam.to_json())
    outputs = ["family.json"]
    code = EXIT_OK
    if args.action == "verify":
        C_M = cfg["verify"]["C_M"] or fam.margin_constant
        t_grid = np.linspace(0.0, 1.0, cfg["verify"]["t_points"] + 2)[1:-1]
        holder = cfg["verify"]["holder"] or cfg["family"]["holder"]
        if holder is not None and "L" not in holder:
            holder = None
        rep = verify_family(fam, MarginSpec(fam.alpha, C_M), holder=holder, t_grid=t_grid)
        doc = rep.to_dict()
        doc["C_M"] = C_M
        write_atomic(os.path.join(out, "verify.json"), json_text(doc))
        outputs.append("verify.json")
        code = EXIT_OK if rep.passed else EXIT_FAIL
    write_manifest(out, cfg, outputs, started, f"family {args.action}")
    return code


def _run_all(cfg, fam):
    from acbound.mc import run_ac

    run = cfg["run"]
    lam = lambda_grid(cfg, fam)
    subset = fam.select_codes(run["sigma_subset_size"])
    ests = []
    for n in run["n_list"]:
        ests.append(run_ac(fam, subset, cfg["classifier"], n, run["m"], lam, run["master_seed"], run["workers"]))
    return ests


def cmd_ac(args):
    cfg = load_config(args.config, args.overrides)
    started = time.time()
    out = args.out
    if args.action == "run":
        fam = build_from_config(cfg)
        try:
            ests = _run_all(cfg, fam)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        rows = [r for e in ests for r in e.rows()]
        write_atomic(os.path.join(out, "ac_estimates.csv"), csv_text(AC_HEADER, rows))
        erows = [(e.family_id, s, e.n, e.m, float(e.mean_excess[i]))
                 for e in ests for i, s in enumerate(e.sigma_indices)]
        write_atomic(os.path.join(out, "excess_means.csv"), csv_text(EXCESS_HEADER, erows))
        write_manifest(out, cfg, ["ac_estimates.csv", "excess_means.csv"], started, "ac run")
        return EXIT_OK
    code = fit_outputs(cfg, out)
    write_manifest(out, cfg, ["rates.csv", "fit.json"], started, "ac fit")
    return code


def _read_csv(path):
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def fit_outputs(cfg, out):
    """Fit exponents from ``ac_estimates.csv`` (and ``excess_means.csv``) in ``out``."""
    from acbound.mc import fit_concentration_slope, fit_lambda_exponent, fit_n_rate

    path = os.path.join(out, "ac_estimates.csv")
    if not os.path.exists(path):
        raise ConfigError(f"missing {path}; run 'ac run' first")
    alpha = cfg["family"]["alpha"]
    r_prime = cfg["fit"]["r_prime"]
    rows = _read_csv(path)
    by_n = {}
    for r in rows:
        n, lam, cnt, m = int(r["n"]), float(r["lambda"]), int(r["exceed_count"]), int(r["m"])
        cur = by_n.setdefault(n, {}).get(lam)
        if cur is None or cnt > cur[0]:
            by_n[n][lam] = (cnt, m)
    fits, report = [], {"lambda_exponent": {}, "notes": []}
    for n in sorted(by_n):
        pts = sorted((lam, c / m) for lam, (c, m) in by_n[n].items())
        try:
            f = fit_lambda_exponent(pts, alpha)
        except ValueError as exc:
            report["notes"].append(f"n={n}: lambda_exponent skipped ({exc})")
            continue
        fits.append(f)
        report["lambda_exponent"][str(n)] = f.to_dict()
    if len(by_n) >= 3:
        common = sorted(set.intersection(*(set(v) for v in by_n.values())))
        usable = [lam for lam in common if all(0 < by_n[n][lam][0] < by_n[n][lam][1] for n in by_n)]
        if usable:
            lam = usable[-1]
            trip = [(n, lam, by_n[n][lam][0] / by_n[n][lam][1]) for n in sorted(by_n)]
            f = fit_concentration_slope(trip, alpha)
            fits.append(f)
            report["concentration_slope"] = dict(f.to_dict(), **{"lambda": lam})
        else:
            report["notes"].append("concentration_slope skipped: no lambda with 0 < p_hat < 1 at every n")
    epath = os.path.join(out, "excess_means.csv")
    if os.path.exists(epath) and r_prime is not None:
        agg = {}
        for r in _read_csv(epath):
            agg.setdefault(int(r["n"]), []).append(float(r["mean_excess"]))
        pts = [(n, max(v)) for n, v in sorted(agg.items())]
        try:
            f = fit_n_rate(pts, alpha, r_prime)
            fits.append(f)
            report["n_rate"] = f.to_dict()
        except ValueError as exc:
            report["notes"].append(f"n_rate skipped ({exc})")
    rrows = [(f.kind, f.slope, f.intercept, f.r2, f.n_points, f.alpha,
              "" if f.r_prime is None else f.r_prime) for f in fits]
    write_atomic(os.path.join(out, "rates.csv"), csv_text(RATES_HEADER, rrows))
    write_atomic(os.path.join(out, "fit.json"), json_text(report))
    return EXIT_OK


def cmd_oracle(args):
    started = time.time()
    out = args.out
    if args.kind == "fano":
        doc = oracle_fano(args.instances, args.support, args.M, args.seed)
    elif args.kind == "fixedpoint":
        doc = oracle_fixedpoint(args.points)
    else:
        doc = oracle_net_entropy(args.d, args.beta, args.L, args.eps)
    write_atomic(os.path.join(out, "oracle.json"), json_text(doc))
    write_manifest(out, vars(args) | {"func": None}, ["oracle.json"], started, f"oracle {args.kind}")
    return EXIT_OK if doc["passed"] else EXIT_FAIL


def oracle_fano(instances, support, M, seed):
    from acbound.bounds import FANO_MAX_M, FANO_MAX_SUPPORT, FiniteMeasure, fano_oracle_verify

    if support > FANO_MAX_SUPPORT or M > FANO_MAX_M or M < 2:
        raise ConfigError(f"enumeration too large or invalid: need support <= {FANO_MAX_SUPPORT}, 2 <= M <= {FANO_MAX_M}")
    rng = np.random.default_rng(seed)
    res = []
    for k in range(instances):
        Q = [FiniteMeasure.random(support, rng) for _ in range(M + 1)]
        r = fano_oracle_verify(Q)
        r["Q"] = [q.weights.tolist() for q in Q]
        r["instance"] = k
        res.append(r)
    return {"kind": "fano", "support": support, "M": M, "seed": seed,
            "passed": all(r["pass"] for r in res), "instances": res}


def oracle_fixedpoint(points):
    from acbound.bounds import localized_forms, sigma_n_t, sigma_n_t_scan

    D2, phi = localized_forms(kappa=1.0, rho=0.5)
    res = []
    for n in (10**3, 10**4, 10**5):
        for t in (0.5, 1.0, 4.0):
            s = sigma_n_t(D2, phi, t, n)
            g = sigma_n_t_scan(D2, phi, t, n, points)
            rel = abs(s - g) / g
            res.append({"n": n, "t": t, "bisection": s, "grid": g, "rel_diff": rel, "pass": rel <= 1e-4})
    return {"kind": "fixedpoint", "forms": {"D2": D2.terms, "phi_n": "delta^(1/4) n^(-1/2)"},
            "passed": all(r["pass"] for r in res), "instances": res}


def oracle_net_entropy(d, beta, L, eps_list):
    from acbound.classifiers import build_holder_net
    from acbound.mc import _linfit

    rows = []
    for eps in eps_list:
        net = build_holder_net(d, beta, L, eps)
        rows.append({"epsilon": eps, "log_size": net.log_size, "cells": net.lattice.n_cells})
    x = [math.log(1 / r["epsilon"]) for r in rows]
    y = [math.log(r["log_size"]) for r in rows]
    slope, _, r2, _ = _linfit(x, y)
    target = d / beta
    return {"kind": "net-entropy", "d": d, "beta": beta, "L": L, "rows": rows, "slope": slope,
            "target": target, "r2": r2, "passed": abs(slope - target) <= 0.3 * target}


# ---------------------------------------------------------------- argparse

def _parser():
    p = argparse.ArgumentParser(prog="acbound", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="group", required=True)

    pf = sub.add_parser("family", help="build or verify a lower-bound family")
    pf.add_argument("action", choices=["build", "verify"])
    pf.add_argument("--config", required=True)
    pf.add_argument("--out", default=".")
    pf.set_defaults(func=cmd_family)

    pa = sub.add_parser("ac", help="Monte Carlo AC estimates and rate fits")
    pa.add_argument("action", choices=["run", "fit"])
    pa.add_argument("--config", required=True)
    pa.add_argument("--out", default=".")
    pa.set_defaults(func=cmd_ac)

    po = sub.add_parser("oracle", help="exhaustive and grid oracles")
    po.add_argument("kind", choices=["fano", "fixedpoint", "net-entropy"])
    po.add_argument("--out", default=".")
    po.add_argument("--instances", type=int, default=50)
    po.add_argument("--support", type=int, default=6)
    po.add_argument("--M", type=int, default=2)
    po.add_argument("--seed", type=int, default=0)
    po.add_argument("--points", type=int, default=10**6)
    po.add_argument("--d", type=int, default=1)
    po.add_argument("--beta", type=float, default=1.0)
    po.add_argument("--L", type=float, default=1.0)
    po.add_argument("--eps", type=lambda s: [float(x) for x in s.split(",")], default=[0.4, 0.2, 0.1, 0.05])
    po.set_defaults(func=cmd_oracle)
    return p


def main(argv=None) -> int:
    parser = _parser()
    try:
        args, extra = parser.parse_known_args(argv)
        bad = [e for e in extra if e.startswith("-") or "=" not in e]
        if bad or (extra and args.group == "oracle"):
            parser.error(f"unrecognized arguments: {' '.join(bad or extra)}")
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    args.overrides = extra
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"acbound: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
