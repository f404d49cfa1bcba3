"""Replicated Monte Carlo estimation of accuracy-confidence (AC) functions.

For a family member ``P_sigma`` and a classifier ``f_n`` the AC function is
``lambda -> P(R(f_n) - R* >= lambda)``. Each replication draws a sample with
its own seed from :func:`derive_seed`, trains, and computes the excess risk
exactly from the family's closed form. Tallies are integers merged in a fixed
order, so results do not depend on the number of worker processes.
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from acbound.bounds import ac_exponent
from acbound.classifiers import (
    NetDictionary,
    RuleClass,
    build_holder_net,
    class_erm,
    epsilon_schedule,
    net_erm,
)

MASK64 = (1 << 64) - 1
EXCEED_RTOL = 1e-9


def _splitmix(z):
    z = (z + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(master: int, sigma_index: int, rep_index: int) -> int:
    """64-bit stream seed for replication ``rep_index`` under code ``sigma_index``."""
    z = _splitmix(int(master) & MASK64)
    z = _splitmix(z ^ (int(sigma_index) & MASK64))
    return _splitmix(z ^ (int(rep_index) & MASK64))


def clopper_pearson(k, m, level: float = 0.95):
    """Exact binomial interval; vectorised over ``k``."""
    k = np.asarray(k, dtype=np.float64)
    tail = (1.0 - level) / 2.0
    with np.errstate(invalid="ignore"):
        lo = np.where(k > 0, stats.beta.ppf(tail, k, m - k + 1), 0.0)
        hi = np.where(k < m, stats.beta.ppf(1.0 - tail, k + 1, m - k), 1.0)
    return lo, hi


# ---------------------------------------------------------------- classifiers

def make_trainer(family, spec: dict, n: int):
    """Resolve a classifier spec into ``dataset -> PredictionRule``.

    ``{"kind": "class_erm"}`` is ERM over all cellwise labellings;
    ``{"kind": "net_erm", "net": {...}}`` takes either ``{"family_codes": true}``
    (the family's own regression functions) or Hölder lattice parameters
    ``beta``, ``L`` and ``epsilon`` (or ``schedule: {"r": r}``).
    """
    kind = spec.get("kind")
    if kind == "class_erm":
        cls = RuleClass.product(family)
        return lambda D: class_erm(cls, D)
    if kind == "net_erm":
        net_spec = spec.get("net") or {}
        if net_spec.get("family_codes"):
            net = NetDictionary.from_family(family)
        else:
            beta = float(net_spec.get("beta", 1.0))
            L = float(net_spec.get("L", 1.0))
            d = int(net_spec.get("d", family.d))
            if d != family.d:
                raise ValueError("classifier incompatible with family: net dimension differs")
            if "epsilon" in net_spec:
                eps = float(net_spec["epsilon"])
            elif "schedule" in net_spec:
                eps = epsilon_schedule(n, family.alpha, float(net_spec["schedule"]["r"]))
            else:
                raise ValueError("net needs epsilon or schedule")
            net = build_holder_net(d, beta, L, eps)
        return lambda D: net_erm(net, D)
    raise ValueError(f"classifier incompatible with family: unknown kind {kind!r}")


# ---------------------------------------------------------------- engine

_WORKER = {}


def _init_worker(family, spec, n):
    _WORKER["family"] = family
    _WORKER["trainer"] = make_trainer(family, spec, n)


def _block(task):
    sigma, master, n, reps = task
    fam, train = _WORKER["family"], _WORKER["trainer"]
    out = np.empty(len(reps))
    for k, r in enumerate(reps):
        D = fam.sample_dataset(sigma, n, derive_seed(master, sigma, r))
        out[k] = fam.exact_excess(sigma, train(D))
    return out


@dataclass
class ACEstimate:
    family_id: str
    n: int
    m: int
    lambda_grid: np.ndarray
    sigma_indices: list
    counts: np.ndarray
    excess_sum: np.ndarray
    level: float = 0.95

    @property
    def p_hat(self) -> np.ndarray:
        return self.counts / self.m

    @property
    def ci(self):
        return clopper_pearson(self.counts, self.m, self.level)

    @property
    def mean_excess(self) -> np.ndarray:
        return self.excess_sum / self.m

    def worst_case(self) -> dict:
        """Per lambda: the largest ``p_hat`` over codes (first code on ties) and its interval."""
        arg = np.argmax(self.counts, axis=0)
        cnt = self.counts[arg, np.arange(self.counts.shape[1])]
        lo, hi = clopper_pearson(cnt, self.m, self.level)
        return {"sigma": [self.sigma_indices[i] for i in arg], "count": cnt,
                "p_hat": cnt / self.m, "ci_lo": lo, "ci_hi": hi}

    def pooled(self) -> dict:
        cnt = self.counts.sum(axis=0)
        tot = self.m * len(self.sigma_indices)
        lo, hi = clopper_pearson(cnt, tot, self.level)
        return {"count": cnt, "trials": tot, "p_hat": cnt / tot, "ci_lo": lo, "ci_hi": hi}

    def rows(self):
        lo, hi = self.ci
        for s, sig in enumerate(self.sigma_indices):
            for k, lam in enumerate(self.lambda_grid):
                yield (self.family_id, sig, self.n, float(lam), self.m, int(self.counts[s, k]),
                       float(self.p_hat[s, k]), float(lo[s, k]), float(hi[s, k]))


def run_ac(family, sigma_subset: Sequence[int], classifier_spec: dict, n: int, m: int,
           lambda_grid, master_seed: int, workers: int = 1, block: int = 250) -> ACEstimate:
    if m < 1:
        raise ValueError("m must be >= 1")
    if n < 1:
        raise ValueError("n must be >= 1")
    lam = np.asarray(lambda_grid, dtype=np.float64)
    if lam.ndim != 1 or lam.size == 0 or np.any(np.diff(lam) < 0):
        raise ValueError("lambda grid must be a nonempty ascending list")
    sigmas = [int(s) for s in sigma_subset]
    if not sigmas or any(not 0 <= s < family.n_codes for s in sigmas):
        raise ValueError("sigma subset must be nonempty valid code indices")
    make_trainer(family, classifier_spec, n)  # validate before spawning anything
    master = derive_seed(master_seed, n, 0)
    tasks = [(s, master, n, range(r0, min(m, r0 + block))) for s in sigmas for r0 in range(0, m, block)]
    if workers <= 1:
        _init_worker(family, classifier_spec, n)
        results = [_block(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker,
                                 initargs=(family, classifier_spec, n)) as ex:
            results = list(ex.map(_block, tasks))
    per_sigma = {}
    for (s, *_), res in zip(tasks, results):
        per_sigma.setdefault(s, []).append(res)
    counts = np.zeros((len(sigmas), lam.size), dtype=np.int64)
    esum = np.zeros(len(sigmas))
    thr = lam * (1.0 - EXCEED_RTOL)
    for i, s in enumerate(sigmas):
        ex = np.concatenate(per_sigma[s])
        counts[i] = (ex[:, None] >= thr[None, :]).sum(axis=0)
        esum[i] = math.fsum(ex)
    return ACEstimate(family.family_id, n, m, lam, sigmas, counts, esum)


# ---------------------------------------------------------------- exact oracle

def flip_count_pmf(family, sigma_index: int, n: int) -> np.ndarray:
    """Exact law of the number of cells where cellwise majority-vote ERM is wrong.

    Cell occupancies are multinomial; they are peeled off one cell at a time
    (``n_j`` given the previous counts is binomial) while tracking the number of
    wrong cells. The majority label is 1 on ties and on empty cells.
    """
    from scipy.stats import binom

    b, w, a = family.b, family.w, family.a
    sig = family.codes[sigma_index]
    N = np.arange(n + 1)
    state = np.zeros((n + 1, b + 1))
    state[n, 0] = 1.0
    k = np.arange(n + 1)
    for j in range(b):
        p = min(1.0, w / (1.0 - j * w))
        p1 = (1.0 + sig[j] * a) / 2.0
        # P(majority label is 1 | k points in the cell)
        lab1 = binom.sf(np.ceil(k / 2.0) - 1, k, p1)
        wrong = 1.0 - lab1 if sig[j] > 0 else lab1
        # T[N_rem, N_next]: N_rem - N_next points fall into cell j
        occ = N[:, None] - N[None, :]
        valid = occ >= 0
        occc = np.where(valid, occ, 0)
        pm = np.where(valid, binom.pmf(occc, N[:, None], p), 0.0)
        T1 = pm * wrong[occc]
        T0 = pm - T1
        new = T0.T @ state
        new[:, 1:] += (T1.T @ state)[:, :-1]
        state = new
    return state.sum(axis=0)


def exact_ac_curve(family, sigma_index: int, n: int, lambda_grid) -> np.ndarray:
    """Exact ``P(excess >= lambda)`` for cellwise majority-vote ERM."""
    pmf = flip_count_pmf(family, sigma_index, n)
    excess = np.arange(family.b + 1) * family.cell_excess
    lam = np.asarray(lambda_grid, dtype=np.float64)
    hit = excess[None, :] >= lam[:, None] * (1.0 - EXCEED_RTOL)
    return np.clip((pmf[None, :] * hit).sum(axis=1), 0.0, 1.0)


# ---------------------------------------------------------------- fits

@dataclass
class RateFit:
    kind: str
    points: list
    slope: float
    intercept: float
    r2: float
    excluded: list = field(default_factory=list)
    alpha: Optional[float] = None
    r_prime: Optional[float] = None
    theory: Optional[float] = None
    stderr: float = math.nan

    @property
    def n_points(self) -> int:
        return len(self.points)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "slope": self.slope, "intercept": self.intercept, "r2": self.r2,
                "n_points": self.n_points, "alpha": self.alpha, "r_prime": self.r_prime,
                "theory": self.theory, "stderr": self.stderr, "points": [list(map(float, p)) for p in self.points],
                "excluded": [list(map(float, p)) for p in self.excluded]}


def _linfit(x, y):
    """Least squares line; returns slope, intercept, r2 and the slope's standard error."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    res = stats.linregress(x, y)
    resid = y - (res.intercept + res.slope * x)
    ss_res = float(np.sum(resid**2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else min(1.0, max(0.0, 1.0 - ss_res / ss_tot))
    return float(res.slope), float(res.intercept), r2, float(res.stderr)


def _lambda_points(estimates):
    if isinstance(estimates, ACEstimate):
        return list(zip(estimates.lambda_grid, estimates.worst_case()["p_hat"]))
    return [(float(l), float(p)) for l, p in estimates]


def fit_lambda_exponent(estimates, alpha) -> RateFit:
    """Slope of ``log(-log p)`` against ``log lambda``; estimates ``(2 + alpha)/(1 + alpha)``.

    ``estimates`` is an :class:`ACEstimate` (its worst case over codes is used)
    or ``(lambda, p_hat)`` pairs. Points with ``p_hat`` in ``{0, 1}`` are excluded.
    """
    pts = _lambda_points(estimates)
    use = [(l, p) for l, p in pts if 0.0 < p < 1.0 and l > 0]
    excl = [(l, p) for l, p in pts if not (0.0 < p < 1.0 and l > 0)]
    if len(use) < 3:
        raise ValueError("need at least 3 points with 0 < p_hat < 1")
    x = [math.log(l) for l, _ in use]
    y = [math.log(-math.log(p)) for _, p in use]
    s, i, r2, se = _linfit(x, y)
    return RateFit("lambda_exponent", [(a, b) for a, b in zip(x, y)], s, i, r2, excl, alpha,
                   theory=ac_exponent(alpha), stderr=se)


def fit_concentration_slope(estimates, alpha) -> RateFit:
    """Slope ``c`` of ``-log p`` against ``n lambda^{(2+alpha)/(1+alpha)}``.

    ``estimates`` holds ``(n, lambda, p_hat)`` triples with at least 3 distinct ``n``.
    """
    e = ac_exponent(alpha)
    pts = [(int(n), float(l), float(p)) for n, l, p in estimates]
    use = [t for t in pts if 0.0 < t[2] < 1.0]
    excl = [t for t in pts if not 0.0 < t[2] < 1.0]
    if len({t[0] for t in use}) < 3:
        raise ValueError("need at least 3 values of n with 0 < p_hat < 1")
    x = [n * l**e for n, l, _ in use]
    y = [-math.log(p) for _, _, p in use]
    s, i, r2, se = _linfit(x, y)
    return RateFit("concentration_slope", list(zip(x, y)), s, i, r2, excl, alpha, stderr=se)


def concentration_points(estimates: Sequence[ACEstimate], lam: float):
    """``(n, lambda, worst-case p_hat)`` at the grid value closest to ``lam`` in every estimate."""
    out = []
    for est in estimates:
        k = int(np.argmin(np.abs(est.lambda_grid - lam)))
        out.append((est.n, float(est.lambda_grid[k]), float(est.worst_case()["p_hat"][k])))
    return out


def fit_n_rate(mean_excess, alpha, r_prime) -> RateFit:
    """Slope of log mean excess against ``log n``; theory ``-(1+alpha)/(2+alpha+r')``."""
    pts = [(int(n), float(e)) for n, e in mean_excess]
    use = [(n, e) for n, e in pts if e > 0]
    excl = [(n, e) for n, e in pts if e <= 0]
    if excl:
        warnings.warn(f"dropping {len(excl)} point(s) with zero mean excess")
    ns = sorted({n for n, _ in use})
    if len(ns) < 4 or ns[-1] < 16 * ns[0]:
        raise ValueError("need at least 4 values of n spanning a factor of 16")
    x = [math.log(n) for n, _ in use]
    y = [math.log(e) for _, e in use]
    s, i, r2, se = _linfit(x, y)
    theory = -1.0 if math.isinf(alpha) else -(1.0 + alpha) / (2.0 + alpha + r_prime)
    return RateFit("n_rate", list(zip(x, y)), s, i, r2, excl, alpha, r_prime, theory, se)

