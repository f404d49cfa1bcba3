"""Closed-form theoretical quantities.

Divergences between finite measures, the Fano-type lower bound with an
exhaustive oracle, a Bernstein tail, the localized fixed-point calculus built
on power-form envelopes, and the accuracy-confidence envelopes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np

from acbound import kernels

FANO_MAX_SUPPORT = 10
FANO_MAX_M = 3


class FiniteMeasure:
    """Probability vector on ``{0, ..., s-1}``."""

    def __init__(self, weights):
        w = np.array(weights, dtype=np.float64).reshape(-1)
        if w.size == 0:
            raise ValueError("empty support")
        if np.any(w < 0) or np.any(~np.isfinite(w)):
            raise ValueError("weights must be finite and nonnegative")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1")
        w.flags.writeable = False
        self.weights = w

    @property
    def s(self) -> int:
        return self.weights.shape[0]

    @classmethod
    def random(cls, s: int, rng, sparsity: float = 0.0) -> "FiniteMeasure":
        w = rng.dirichlet(np.ones(s))
        if sparsity > 0:
            w[rng.random(s) < sparsity] = 0.0
            if w.sum() == 0:
                w[rng.integers(s)] = 1.0
        w = w / w.sum()
        # push rounding error into the largest entry so the sum is 1 to the last bit
        w[np.argmax(w)] += 1.0 - w.sum()
        return cls(w)

    def __repr__(self):
        return f"FiniteMeasure({self.weights.tolist()})"


def _pair(mu, nu):
    m = mu.weights if isinstance(mu, FiniteMeasure) else FiniteMeasure(mu).weights
    v = nu.weights if isinstance(nu, FiniteMeasure) else FiniteMeasure(nu).weights
    if m.shape != v.shape:
        raise ValueError("measures live on supports of different size")
    return m, v


def kl_divergence(mu, nu) -> float:
    m, v = _pair(mu, nu)
    if np.any((m > 0) & (v == 0)):
        return math.inf
    pos = m > 0
    return float(max(0.0, np.sum(m[pos] * np.log(m[pos] / v[pos]))))


def chi2_divergence(mu, nu) -> float:
    m, v = _pair(mu, nu)
    if np.any((m > 0) & (v == 0)):
        return math.inf
    pos = v > 0
    return float(np.sum((m[pos] - v[pos]) ** 2 / v[pos]))


def fano_bound(M: int, chi: float) -> float:
    """``(1/12) min(1, M exp(-3 chi))``."""
    if M < 2:
        raise ValueError("M must be at least 2")
    if chi < 0:
        raise ValueError("chi must be nonnegative")
    if math.isinf(chi):
        return 0.0
    return min(1.0, M * math.exp(-3.0 * chi)) / 12.0


def fano_oracle_verify(Q: Sequence, chi_cap: float = math.inf) -> dict:
    """Brute-force check of the Fano-type bound on ``M + 1`` finite measures.

    ``chi`` is the mean of ``KL(Q_j, Q_0)`` over ``j >= 1``. Every assignment of
    support points to one of the sets ``A_0..A_M`` (or to none) is enumerated
    and the smallest achievable ``max_i Q_i(complement of A_i)`` is compared
    with the bound. Instances with infinite ``chi``, or ``chi`` above
    ``chi_cap``, are skipped since the hypothesis is void.
    """
    Q = [q if isinstance(q, FiniteMeasure) else FiniteMeasure(q) for q in Q]
    M = len(Q) - 1
    s = Q[0].s
    if any(q.s != s for q in Q):
        raise ValueError("measures live on supports of different size")
    if s > FANO_MAX_SUPPORT or M > FANO_MAX_M:
        raise ValueError("enumeration too large")
    chi = float(np.mean([kl_divergence(Q[j], Q[0]) for j in range(1, M + 1)]))
    bound = fano_bound(M, chi) if not math.isinf(chi) else 0.0
    if math.isinf(chi) or chi > chi_cap:
        return {"chi": chi, "p_star_min": None, "bound": bound, "pass": True, "skipped": True}
    mat = np.stack([q.weights for q in Q])
    p_min, assign = kernels.fano_min_worst(mat)
    return {
        "chi": chi, "p_star_min": p_min, "bound": bound,
        "pass": bool(p_min >= bound - 1e-12), "skipped": False,
        "assignment": assign.tolist(),
    }


def bernstein_tail(n, v, R, u) -> float:
    return math.exp(-n * u * u / (2.0 * (v + R * u / 3.0)))


@dataclass(frozen=True)
class PowerForm:
    """``delta -> sum_i c_i delta^{p_i}`` on ``(0, 1]``."""

    terms: tuple

    def __init__(self, terms):
        terms = tuple((float(c), float(p)) for c, p in terms)
        if any(c < 0 for c, _ in terms):
            raise ValueError("coefficients must be nonnegative")
        object.__setattr__(self, "terms", terms)

    def __call__(self, delta):
        delta = np.asarray(delta, dtype=np.float64)
        return sum(c * delta**p for c, p in self.terms) + 0.0 * delta


def flat_transform(psi: PowerForm, delta):
    """Envelope of ``sup_{s >= delta} psi(s)/s`` on ``(0, 1]``.

    Per-term sups are summed, which is exact for a single term and an upper
    bound otherwise.
    """
    delta = np.asarray(delta, dtype=np.float64)
    out = np.zeros_like(delta)
    for c, p in psi.terms:
        out = out + (c * delta ** (p - 1.0) if p <= 1.0 else c + 0.0 * delta)
    return out if out.ndim else float(out)


PhiLike = Union[PowerForm, Callable[[int], PowerForm]]


def _phi_at(phi_n: PhiLike, n) -> PowerForm:
    return phi_n if isinstance(phi_n, PowerForm) else phi_n(n)


def v_n_t(delta, D2: PowerForm, phi_n: PhiLike, t, n):
    """``4 [phi_n_flat(delta) + sqrt(D2_flat(delta) t / (n delta)) + t / (n delta)]``.

    ``phi_n`` is either a fixed PowerForm or a map ``n -> PowerForm``.
    """
    delta = np.asarray(delta, dtype=np.float64)
    tn = t / (n * delta)
    out = 4.0 * (flat_transform(_phi_at(phi_n, n), delta) + np.sqrt(flat_transform(D2, delta) * tn) + tn)
    return out if np.ndim(out) else float(out)


SIGMA_LO = 1e-12


def _check_monotone(D2, phi_n, t, n):
    grid = np.geomspace(SIGMA_LO, 1.0, 241)
    v = v_n_t(grid, D2, phi_n, t, n)
    if np.any(np.diff(v) > 1e-12 * np.abs(v[:-1])):
        raise ValueError("fixed point undefined: V is not nonincreasing")


def sigma_n_t(D2: PowerForm, phi_n: PhiLike, t, n, rtol: float = 1e-9) -> float:
    """``inf {delta in [1e-12, 1] : V(delta) <= 1}`` by bisection on ``log delta``."""
    _check_monotone(D2, phi_n, t, n)
    if v_n_t(1.0, D2, phi_n, t, n) > 1.0:
        return 1.0
    if v_n_t(SIGMA_LO, D2, phi_n, t, n) <= 1.0:
        return SIGMA_LO
    lo, hi = math.log(SIGMA_LO), 0.0
    while hi - lo > math.log1p(rtol):
        mid = 0.5 * (lo + hi)
        if v_n_t(math.exp(mid), D2, phi_n, t, n) <= 1.0:
            hi = mid
        else:
            lo = mid
    return math.exp(hi)


def sigma_n_t_scan(D2: PowerForm, phi_n: PhiLike, t, n, points: int = 10**6) -> float:
    """Grid version of :func:`sigma_n_t` over log-spaced points (relative step ~ 28/points)."""
    grid = np.geomspace(SIGMA_LO, 1.0, points)
    ok = np.flatnonzero(v_n_t(grid, D2, phi_n, t, n) <= 1.0)
    return 1.0 if ok.size == 0 else float(grid[ok[0]])


def localized_forms(kappa: float, rho: float, c_D: float = 1.0, c_phi: float = 1.0):
    """Power forms matching margin exponent ``kappa`` and entropy exponent ``rho``.

    ``D2(delta) = c_D delta^{1/kappa}`` and
    ``phi_n(delta) = c_phi n^{-1/2} delta^{(1 - rho) / (2 kappa)}``.
    """
    D2 = PowerForm([(c_D, 1.0 / kappa)])

    def phi_n(n):
        return PowerForm([(c_phi / math.sqrt(n), (1.0 - rho) / (2.0 * kappa))])

    return D2, phi_n


def sigma_comparator(n, t, kappa, rho) -> float:
    """``n^{-kappa/(2 kappa - 1 + rho)} + (t/n)^{kappa/(2 kappa - 1)}``; multiply by a fitted constant."""
    return n ** (-kappa / (2 * kappa - 1 + rho)) + (t / n) ** (kappa / (2 * kappa - 1))


def fit_cbar7(grid, kappa, rho, c_D=1.0, c_phi=1.0) -> float:
    """Smallest constant making the comparator dominate ``sigma_n_t`` on ``grid`` of ``(n, t)``."""
    D2, phi = localized_forms(kappa, rho, c_D, c_phi)
    return max(sigma_n_t(D2, phi, t, n) / sigma_comparator(n, t, kappa, rho) for n, t in grid)


def critical_lambda(n, alpha, r_prime, D) -> float:
    """``D n^{-(1+alpha)/(2+alpha+r')}`` (exponent 1 at ``alpha = inf``)."""
    expo = 1.0 if math.isinf(alpha) else (1.0 + alpha) / (2.0 + alpha + r_prime)
    return D * n ** (-expo)


def lambda_floor_bayes(n, alpha, rho, c_prime) -> float:
    """``c' n^{-(1+alpha)/(2+alpha(1+rho))}`` (exponent ``1/(1+rho)`` at ``alpha = inf``)."""
    expo = 1.0 / (1.0 + rho) if math.isinf(alpha) else (1.0 + alpha) / (2.0 + alpha * (1.0 + rho))
    return c_prime * n ** (-expo)


def ac_exponent(alpha) -> float:
    return 1.0 if math.isinf(alpha) else (2.0 + alpha) / (1.0 + alpha)


def ac_envelopes(n, lam, alpha, upper: dict, lower: dict) -> dict:
    """Upper ``P exp(-c n lam^e)`` and lower ``(1/12) min(1, 2^{b/16} exp(-c' n lam^e))``.

    ``upper`` needs ``c_upper`` and ``prefactor_upper``; ``lower`` needs ``b``
    and ``c_lower``. ``e = (2 + alpha)/(1 + alpha)``.
    """
    e = ac_exponent(alpha)
    x = n * lam**e
    up = upper["prefactor_upper"] * math.exp(-upper["c_upper"] * x)
    log_lo = lower["b"] / 16.0 * math.log(2.0) - lower["c_lower"] * x
    lo = min(1.0, math.exp(min(log_lo, 0.0))) / 12.0
    return {"upper": up, "lower": lo, "exponent": e}
