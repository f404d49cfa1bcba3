"""Margin condition in its two equivalent forms and the comparison inequalities it implies.

Tail form:      mu(0 < |eta - 1/2| <= t) <= C_M t^alpha
Integral form:  int_G |2 eta - 1| dmu >= c_M mu(G)^kappa,  kappa = (1 + alpha) / alpha

Every L1 distance between prediction rules here ignores the set
``{eta == 1/2}``: on a positive-mass set where ``eta`` equals 1/2 every label
is Bayes-optimal and the inequalities would otherwise fail for no reason.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from acbound.core import (
    Box,
    Distribution,
    MarginSpec,
    PredictionRule,
    RegressionFn,
    bayes_rule,
    excess_risk_quadrature,
    l1_disagreement,
)

CLOSED_TOL = 1e-12
QUAD_TOL = 1e-6


def kappa_of_alpha(alpha: float) -> float:
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    if math.isinf(alpha):
        return 1.0
    return (1.0 + alpha) / alpha


def c_M_of(C_M: float, alpha: float) -> float:
    if not C_M > 0:
        raise ValueError("C_M must be positive")
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    if math.isinf(alpha):
        return 1.0
    return (2.0 * C_M) ** (-1.0 / alpha)


@dataclass
class MarginReport:
    checks: list = field(default_factory=list)

    @property
    def worst_ratio(self) -> float:
        return max((c["ratio"] for c in self.checks), default=0.0)

    @property
    def verdict(self) -> bool:
        return all(c["pass"] for c in self.checks)


def _entry(key, lhs, rhs, ok, ratio):
    # ratio is clipped into [0, 1] on passing entries so worst_ratio <= 1 iff all pass
    ratio = min(ratio, 1.0) if ok else max(ratio, 1.0 + 1e-15)
    return {"key": key, "lhs": float(lhs), "rhs": float(rhs), "pass": bool(ok), "ratio": float(ratio)}


def _safe_ratio(num, den):
    if num == 0:
        return 0.0
    return math.inf if den == 0 else num / den


def margin_mass(dist: Distribution, t: float, resolution: int = 2000) -> float:
    """``mu(0 < |eta - 1/2| <= t)``; exact for family members."""
    if not isinstance(dist, Distribution):
        raise ValueError("unsupported distribution")
    fam = dist.family
    if fam is not None:
        return fam.bw if fam.a <= 2.0 * t else 0.0
    X, wts, _ = dist.nodes(resolution)
    if X.shape[0] == 0:
        return 0.0
    gap = np.abs(dist.eta(X) - 0.5)
    return float(np.sum(wts[(gap > 0) & (gap <= t)]))


def check_margin_2_15(dist: Distribution, alpha: float, C_M: float, t_grid, resolution: int = 2000) -> MarginReport:
    if C_M < 0.5:
        warnings.warn("C_M < 1/2: admissible only because the zero-margin set has positive mass")
    t_grid = list(t_grid)
    if not t_grid:
        raise ValueError("empty t grid")
    tol = CLOSED_TOL if dist.family is not None else QUAD_TOL
    report = MarginReport()
    for t in t_grid:
        lhs = margin_mass(dist, t, resolution)
        if math.isinf(alpha):
            rhs = 0.0 if t < 1.0 else C_M
        else:
            rhs = C_M * t**alpha
        ok = lhs <= rhs + tol
        report.checks.append(_entry(float(t), lhs, rhs, ok, _safe_ratio(lhs, rhs)))
    return report


def _set_integrals(dist: Distribution, G, resolution):
    """Return ``(int_G |2 eta - 1| dmu, mu(G))`` for a cell list or a Box."""
    fam = dist.family
    if fam is not None and not isinstance(G, Box):
        cells = sorted(set(int(c) for c in G))
        if any(c < 0 or c >= fam.b for c in cells):
            raise ValueError("cell index out of range")
        m = fam.w * len(cells)
        return fam.a * m, m
    if not isinstance(G, Box):
        raise ValueError("sets must be Box instances for this distribution")
    lo, hi = np.asarray(G.lo), np.asarray(G.hi)
    if fam is not None:
        integral = mass = 0.0
        for bx in dist.boxes:
            if bx.density <= 0:
                continue
            ov = np.clip(np.minimum(hi, bx.hi) - np.maximum(lo, bx.lo), 0, None).prod()
            if ov <= 0:
                continue
            if bx.kind == "null":
                raise ValueError("zero-margin set: G meets {eta = 1/2} with positive mass")
            integral += fam.a * bx.density * ov
            mass += bx.density * ov
        return integral, mass
    X, wts, _ = dist.nodes(resolution)
    inside = np.all((X >= lo) & (X <= hi), axis=1)
    gap = np.abs(2.0 * dist.eta(X[inside]) - 1.0)
    if np.any((gap == 0) & (wts[inside] > 0)):
        raise ValueError("zero-margin set: G meets {eta = 1/2} with positive mass")
    return float(np.sum(gap * wts[inside])), float(np.sum(wts[inside]))


def check_margin_2_12(dist: Distribution, kappa: float, c_M: float, sets, resolution: int = 2000) -> MarginReport:
    tol = CLOSED_TOL if dist.family is not None else QUAD_TOL
    report = MarginReport()
    for k, G in enumerate(sets):
        lhs, mass = _set_integrals(dist, G, resolution)
        rhs = c_M * mass**kappa
        ok = lhs >= rhs - tol
        report.checks.append(_entry(k, lhs, rhs, ok, _safe_ratio(rhs, lhs)))
    return report


def lemma23_check(f: PredictionRule, dist: Distribution, margin: MarginSpec, resolution: int = 2000) -> dict:
    """Excess risk versus ``c_M * ||f - f*||_1^kappa``."""
    fstar = bayes_rule(dist.eta)
    closed = dist.family is not None and f.kind == "cellwise"
    l1 = l1_disagreement(f, fstar, dist, exclude_zero_margin=True, resolution=resolution)
    excess = excess_risk_quadrature(f, dist, resolution=resolution)
    bound = margin.c_M * l1**margin.kappa
    tol = CLOSED_TOL if closed else QUAD_TOL
    return {"bound": bound, "excess": excess, "l1": l1, "pass": excess >= bound - tol}


def _sup_distance(eta_bar: RegressionFn, dist: Distribution, resolution: int) -> float:
    fam = dist.family
    if fam is not None and eta_bar.kind == "cellwise" and eta_bar.family is fam:
        differs = np.any(fam.codes[eta_bar.sigma_index] != fam.codes[dist.sigma_index])
        return fam.a if differs else 0.0
    X, wts, _ = dist.nodes(resolution)
    if X.shape[0] == 0:
        return 0.0
    return float(np.max(np.abs(eta_bar(X) - dist.eta(X))))


def supnorm_transfer_check(eta_bar: RegressionFn, dist: Distribution, margin: MarginSpec,
                           resolution: int = 2000) -> dict:
    """Plug-in rule ``1{eta_bar >= 1/2}`` against the sup-norm error of ``eta_bar``.

    Checks ``||f_bar - f*||_1 <= 2 C_M ||eta_bar - eta||_inf^alpha`` and
    ``R(f_bar) - R* <= 2 C_M ||eta_bar - eta||_inf^(1 + alpha)``.
    """
    sup = _sup_distance(eta_bar, dist, resolution)
    f_bar = bayes_rule(eta_bar)
    fstar = bayes_rule(dist.eta)
    closed = dist.family is not None and f_bar.kind == "cellwise"
    tol = CLOSED_TOL if closed else QUAD_TOL
    l1 = l1_disagreement(f_bar, fstar, dist, exclude_zero_margin=True, resolution=resolution)
    excess = excess_risk_quadrature(f_bar, dist, resolution=resolution)
    if math.isinf(margin.alpha):
        l1_bound = 0.0 if sup < 1.0 else 2.0 * margin.C_M
        ex_bound = l1_bound
    else:
        l1_bound = 2.0 * margin.C_M * sup**margin.alpha
        ex_bound = 2.0 * margin.C_M * sup ** (1.0 + margin.alpha)
    return {
        "sup": sup, "l1": l1, "l1_bound": l1_bound, "excess": excess, "excess_bound": ex_bound,
        "l1_bound_pass": l1 <= l1_bound + tol, "excess_bound_pass": excess <= ex_bound + tol,
    }
