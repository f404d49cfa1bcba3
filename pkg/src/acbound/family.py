"""Finite family of distributions used for minimax lower bounds.

The unit cube is cut into ``b = q**d`` cells. On each cell a smooth plateau
bump is placed with a sign ``sigma_j``; the regression function is
``eta_sigma = (1 + sum_j sigma_j phi_j) / 2``. The marginal puts mass ``w``
uniformly on the central plateau subcube of every cell, zero mass on the
bump ramps and the remaining ``1 - b w`` uniformly on the null set ``A0``
where every ``eta_sigma`` equals 1/2. Sign vectors come from a greedy
Varshamov-Gilbert code.
"""
from __future__ import annotations

import hashlib
import itertools
import json
import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np

from acbound import kernels
from acbound.core import (
    Box,
    Dataset,
    Distribution,
    MarginSpec,
    PredictionRule,
    Provenance,
    RegressionFn,
    as_points,
)

SUPPORT_LO, PLATEAU_LO, PLATEAU_HI, SUPPORT_HI = 1 / 8, 1 / 4, 3 / 4, 7 / 8
FORMAT = "acbound.family/1"
MAX_EXHAUSTIVE_B = 24


def smooth_step(v):
    """``exp(-1/v) / (exp(-1/v) + exp(-1/(1-v)))``, clamped to 0 / 1 outside (0, 1)."""
    v = np.asarray(v, dtype=np.float64)
    out = np.where(v >= 1.0, 1.0, 0.0)
    mid = (v > 0.0) & (v < 1.0)
    vm = v[mid]
    e0 = np.exp(-1.0 / vm)
    e1 = np.exp(-1.0 / (1.0 - vm))
    out[mid] = e0 / (e0 + e1)
    return out


def ramp(v):
    """Per-axis factor: 0 off ``(1/8, 7/8)``, 1 on ``[1/4, 3/4]``, smooth in between."""
    v = np.asarray(v, dtype=np.float64)
    up = smooth_step(8.0 * (v - SUPPORT_LO))
    down = smooth_step(8.0 * (SUPPORT_HI - v))
    return np.minimum(up, down)


@dataclass(frozen=True)
class BumpProfile:
    c2: float

    def __post_init__(self):
        if not 0.0 < self.c2 < 0.5:
            raise ValueError("c2 must lie in (0, 1/2)")


def bump_eval(profile: BumpProfile, u) -> np.ndarray:
    """``psi(u) = c2 * prod_j ramp(u_j)`` for points of ``[0,1]^d``."""
    try:
        U = as_points(u)
    except ValueError as exc:
        raise ValueError("bump argument outside [0, 1]^d") from exc
    return profile.c2 * np.prod(ramp(U), axis=1)


def pack_codes(codes) -> np.ndarray:
    """Pack ``+-1`` rows into uint64 words (bit set for +1)."""
    bits = (np.asarray(codes) > 0).astype(np.uint64)
    N, b = bits.shape
    W = max(1, -(-b // 64))
    out = np.zeros((N, W), dtype=np.uint64)
    for j in range(b):
        out[:, j // 64] |= bits[:, j] << np.uint64(j % 64)
    return out


def _unpack_msb(ints, b):
    shifts = np.arange(b - 1, -1, -1, dtype=np.uint64)
    bits = (ints[:, None] >> shifts[None, :]) & np.uint64(1)
    return (2 * bits.astype(np.int8) - 1).astype(np.int8)


def vg_greedy(b: int, min_hamming: Optional[int] = None, mode: str = "exhaustive",
              budget: int = 10_000, seed: int = 0) -> np.ndarray:
    """Greedy code in ``{-1,+1}^b`` with pairwise Hamming distance ``>= min_hamming``.

    ``exhaustive`` scans all words in lexicographic order (``-1 < +1``) and
    keeps every word compatible with those already kept, giving a maximal
    code. ``randomized`` tries ``budget`` random words instead and makes no
    size guarantee.
    """
    if b < 1:
        raise ValueError("b must be >= 1")
    if min_hamming is None:
        min_hamming = math.ceil(b / 8)
    if mode == "exhaustive":
        if b > MAX_EXHAUSTIVE_B:
            raise ValueError("enumeration too large")
        return _unpack_msb(kernels.greedy_code(b, int(min_hamming)), b)
    if mode == "randomized":
        rng = np.random.default_rng(seed)
        cand = (2 * rng.integers(0, 2, size=(budget, b)) - 1).astype(np.int8)
        packed = pack_codes(cand)
        keep = [0]
        for i in range(1, budget):
            if kernels.hamming_to_all(packed[keep], packed[i]).min() >= min_hamming:
                keep.append(i)
        return cand[keep]
    raise ValueError(f"unknown code mode {mode!r}")


def holder_q(delta: float, alpha: float, beta: float, c5: float) -> int:
    """Cells per axis ``ceil(c5 * delta ** (-1 / ((1 + alpha) beta)))``."""
    if min(delta, alpha, beta, c5) <= 0:
        raise ValueError("all arguments must be positive")
    if math.isinf(beta):
        return max(1, math.ceil(c5))
    return max(1, math.ceil(c5 * delta ** (-1.0 / ((1.0 + alpha) * beta))))


@dataclass(frozen=True, eq=False)
class LowerBoundFamily:
    d: int
    q: int
    delta: float
    alpha: float
    C: float
    c2: float
    codes: np.ndarray
    code_mode: str = "exhaustive"
    min_hamming: Optional[int] = None
    warnings: tuple = field(default=())

    def __post_init__(self):
        _validate_params(self.d, self.q, self.delta, self.alpha, self.C, self.c2)
        codes = np.array(self.codes, dtype=np.int8)
        if codes.ndim != 2 or codes.shape[1] != self.b or codes.shape[0] < 1:
            raise ValueError(f"codes must have shape (N, {self.b})")
        if not np.all((codes == 1) | (codes == -1)):
            raise ValueError("codes must be +-1 vectors")
        codes.flags.writeable = False
        object.__setattr__(self, "codes", codes)
        if self.min_hamming is None:
            object.__setattr__(self, "min_hamming", math.ceil(self.b / 8))

    # derived constants
    @property
    def b(self) -> int:
        return self.q**self.d

    @property
    def a(self) -> float:
        """Plateau value of ``phi``: ``c2 delta^{1/(1+alpha)}``."""
        return self.c2 * self.delta ** (1.0 / (1.0 + self.alpha))

    @property
    def w(self) -> float:
        return self.C * self.delta ** (self.alpha / (1.0 + self.alpha)) / self.b

    @property
    def bw(self) -> float:
        return self.C * self.delta ** (self.alpha / (1.0 + self.alpha))

    @property
    def cell_excess(self) -> float:
        """Excess risk of one wrong cell, ``a w = C c2 delta / b``."""
        return self.a * self.w

    @property
    def null_volume(self) -> float:
        return 1.0 - (SUPPORT_HI - SUPPORT_LO) ** self.d

    @property
    def lambda0(self) -> float:
        return 16.0 ** (-(1.0 + self.alpha) / self.alpha) * self.C * self.c2

    @property
    def margin_constant(self) -> float:
        """``C_M = C (2 / c2)^alpha`` for which every member meets the margin condition."""
        return self.C * (2.0 / self.c2) ** self.alpha

    @property
    def plateau_density(self) -> float:
        return 2.0**self.d * self.b * self.w

    @property
    def null_density(self) -> float:
        return (1.0 - self.bw) / self.null_volume

    @property
    def n_codes(self) -> int:
        return self.codes.shape[0]

    @cached_property
    def family_id(self) -> str:
        payload = json.dumps(self._params(), sort_keys=True).encode()
        digest = hashlib.sha256(payload + self.codes.tobytes()).hexdigest()
        return digest[:12]

    def _params(self):
        return {
            "d": self.d, "q": self.q, "delta": self.delta, "alpha": self.alpha,
            "C": self.C, "c2": self.c2, "code_mode": self.code_mode,
            "min_hamming": self.min_hamming,
        }

    @property
    def profile(self) -> BumpProfile:
        return BumpProfile(self.c2)

    # geometry
    def cell_multi(self, k) -> np.ndarray:
        k = np.asarray(k, dtype=np.int64)
        digits = [(k // self.q ** (self.d - 1 - j)) % self.q for j in range(self.d)]
        return np.stack(digits, axis=-1)

    def cell_of(self, X) -> np.ndarray:
        """Cell index of each point inside an open support cube, -1 on ``A0``."""
        X = as_points(X, self.d)
        scaled = X * self.q
        k = np.minimum(np.floor(scaled).astype(np.int64), self.q - 1)
        u = scaled - k
        inside = np.all((u > SUPPORT_LO) & (u < SUPPORT_HI), axis=1)
        lin = np.zeros(X.shape[0], dtype=np.int64)
        for j in range(self.d):
            lin = lin * self.q + k[:, j]
        return np.where(inside, lin, -1)

    def sigma(self, sigma_index: int) -> np.ndarray:
        return self.codes[sigma_index]

    def bayes_labels(self, sigma_index: int) -> np.ndarray:
        return ((self.codes[sigma_index] + 1) // 2).astype(np.int8)

    def eta_values(self, sigma_index: int, X) -> np.ndarray:
        X = as_points(X, self.d)
        scaled = X * self.q
        k = np.minimum(np.floor(scaled).astype(np.int64), self.q - 1)
        psi = bump_eval(self.profile, scaled - k)
        cells = self.cell_of(X)
        sgn = np.where(cells >= 0, self.codes[sigma_index][np.maximum(cells, 0)], 0)
        phi = self.delta ** (1.0 / (1.0 + self.alpha)) * psi
        return (1.0 + sgn * phi) / 2.0

    def eta(self, sigma_index: int) -> RegressionFn:
        return RegressionFn.cellwise(self, sigma_index)

    def bayes_rule(self, sigma_index: int) -> PredictionRule:
        return PredictionRule.cellwise(self, self.bayes_labels(sigma_index), default=1)

    def distribution(self, sigma_index: int) -> Distribution:
        pieces = [(0.0, SUPPORT_LO, "null"), (SUPPORT_LO, PLATEAU_LO, "ramp"),
                  (PLATEAU_LO, PLATEAU_HI, "plateau"), (PLATEAU_HI, SUPPORT_HI, "ramp"),
                  (SUPPORT_HI, 1.0, "null")]
        dens = {"null": self.null_density, "ramp": 0.0, "plateau": self.plateau_density}
        boxes = []
        for k in range(self.b):
            km = self.cell_multi(k)
            for combo in itertools.product(pieces, repeat=self.d):
                kinds = {p[2] for p in combo}
                kind = "null" if "null" in kinds else ("plateau" if kinds == {"plateau"} else "ramp")
                lo = tuple((km[j] + combo[j][0]) / self.q for j in range(self.d))
                hi = tuple((km[j] + combo[j][1]) / self.q for j in range(self.d))
                boxes.append(Box(lo, hi, dens[kind], kind, k if kind != "null" else -1))
        return Distribution(self.eta(sigma_index), boxes, family=self, sigma_index=sigma_index)

    # sampling
    def sample_dataset(self, sigma_index: int, n: int, seed: int) -> Dataset:
        """Draw ``n`` iid pairs from ``P_sigma``; a pure function of ``(sigma_index, n, seed)``."""
        if n < 1:
            raise ValueError("n must be >= 1")
        rng = np.random.default_rng(seed)
        d, q = self.d, self.q
        on_plateau = rng.random(n) < self.bw
        cells = rng.integers(0, self.b, size=n)
        offs = rng.random((n, d))
        X = np.empty((n, d))
        kp = self.cell_multi(cells[on_plateau])
        X[on_plateau] = (kp + PLATEAU_LO + (PLATEAU_HI - PLATEAU_LO) * offs[on_plateau]) / q
        need = int(n - on_plateau.sum())
        if need:
            X[~on_plateau] = self._sample_null(rng, need)
        X = np.clip(X, 0.0, 1.0)
        y = (rng.random(n) < self.eta_values(sigma_index, X)).astype(np.int8)
        prov = Provenance(self.family_id, int(sigma_index), int(seed))
        return Dataset(X, y, prov)

    def _sample_null(self, rng, need):
        acc_rate = self.null_volume
        got = []
        have = 0
        while have < need:
            batch = max(64, int(math.ceil(1.25 * (need - have) / acc_rate)) + 16)
            cand = rng.random((batch, self.d))
            u = (cand * self.q) % 1.0
            ok = np.any((u <= SUPPORT_LO) | (u >= SUPPORT_HI), axis=1)
            got.append(cand[ok])
            have += int(ok.sum())
        return np.concatenate(got)[:need]

    # exact risks
    def exact_bayes_risk(self) -> float:
        return 0.5 - self.a * self.bw / 2.0

    def exact_excess_cellwise(self, sigma_index: int, rule: PredictionRule) -> float:
        if rule.kind != "cellwise" or rule.family is not self:
            raise ValueError("use quadrature: rule is not cellwise over this family")
        wrong = int(np.count_nonzero(rule.labels != self.bayes_labels(sigma_index)))
        return self.cell_excess * wrong

    def cell_label_one_mass(self, rule: PredictionRule) -> np.ndarray:
        """Marginal mass of ``{rule == 1}`` inside each plateau subcube (exact)."""
        if rule.kind == "cellwise" and rule.family is self:
            return self.w * rule.labels.astype(np.float64)
        if rule.kind == "thresholded" and rule.eta.kind == "cellwise" and rule.eta.family is self:
            return self.w * self.bayes_labels(rule.eta.sigma_index).astype(np.float64)
        if rule.kind == "thresholded" and rule.eta.kind == "tabulated":
            return self._tabulated_one_mass(rule.eta)
        raise ValueError("use quadrature: no exact plateau decomposition for this rule")

    def _tabulated_one_mass(self, eta: RegressionFn) -> np.ndarray:
        vals = eta.values
        if vals.ndim != self.d:
            raise ValueError("dimension mismatch")
        g, h = vals.shape[0], eta.step
        lo = np.arange(g) * h
        hi = np.append(np.arange(1, g) * h, 1.0)
        lo[-1] = min(lo[-1], 1.0)
        plo = (np.arange(self.q) + PLATEAU_LO) / self.q
        phi = (np.arange(self.q) + PLATEAU_HI) / self.q
        overlap = np.clip(np.minimum(phi[:, None], hi[None, :]) - np.maximum(plo[:, None], lo[None, :]), 0, None)
        T = (vals >= 0.5).astype(np.float64)
        for _ in range(self.d):
            # contract the leading lattice axis, append the cell axis at the end
            T = np.tensordot(T, overlap, axes=([0], [1]))
        return self.plateau_density * T.reshape(-1)

    def exact_excess(self, sigma_index: int, rule: PredictionRule) -> float:
        """Exact excess risk for any rule with a plateau decomposition."""
        if rule.kind == "cellwise":
            return self.exact_excess_cellwise(sigma_index, rule)
        ones = self.cell_label_one_mass(rule)
        fstar = self.bayes_labels(sigma_index)
        wrong_mass = np.where(fstar == 1, self.w - ones, ones)
        return float(self.a * np.clip(wrong_mass, 0.0, None).sum())

    def pairwise_stats(self, i: int, j: int) -> dict:
        H = int(np.count_nonzero(self.codes[i] != self.codes[j]))
        a, w = self.a, self.w
        return {
            "hamming": H,
            "l2_eta_sq": H * w * a * a,
            "l1_bayes": H * w,
            "chi2": H * w * a * a * 4.0 / (1.0 - a * a),
            "kl": H * w * a * math.log((1.0 + a) / (1.0 - a)),
        }

    def select_codes(self, k: int) -> list:
        """Farthest-point selection of ``k`` code indices (ties to the smallest index)."""
        k = min(k, self.n_codes)
        packed = pack_codes(self.codes)
        chosen = [0]
        dmin = kernels.hamming_to_all(packed, packed[0])
        while len(chosen) < k:
            dmin_masked = dmin.copy()
            dmin_masked[chosen] = -1
            nxt = int(np.argmax(dmin_masked))
            chosen.append(nxt)
            dmin = np.minimum(dmin, kernels.hamming_to_all(packed, packed[nxt]))
        return chosen

    # serialisation
    def to_dict(self) -> dict:
        out = {"format": FORMAT}
        out.update(self._params())
        out["derived"] = {
            "b": self.b, "a": self.a, "w": self.w, "bw": self.bw,
            "cell_excess": self.cell_excess, "null_volume": self.null_volume,
            "lambda0": self.lambda0, "margin_constant": self.margin_constant,
            "bayes_risk": self.exact_bayes_risk(), "family_id": self.family_id,
        }
        out["warnings"] = list(self.warnings)
        out["codes"] = self.codes.astype(int).tolist()
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def from_dict(cls, doc: dict) -> "LowerBoundFamily":
        if doc.get("format") != FORMAT:
            raise ValueError("not a family document")
        fam = cls(
            d=int(doc["d"]), q=int(doc["q"]), delta=float(doc["delta"]),
            alpha=float(doc["alpha"]), C=float(doc["C"]), c2=float(doc["c2"]),
            codes=np.array(doc["codes"], dtype=np.int8), code_mode=doc["code_mode"],
            min_hamming=int(doc["min_hamming"]), warnings=tuple(doc.get("warnings", ())),
        )
        return fam

    @classmethod
    def from_json(cls, text: str) -> "LowerBoundFamily":
        return cls.from_dict(json.loads(text))


def _validate_params(d, q, delta, alpha, C, c2):
    if int(d) != d or d < 1:
        raise ValueError("d must be a positive integer")
    if int(q) != q or q < 1:
        raise ValueError("q must be a positive integer")
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    if not (0.0 < alpha < math.inf):
        raise ValueError("alpha must be positive and finite")
    if not 0.0 < C <= 1.0:
        raise ValueError("C must lie in (0, 1]")
    if not 0.0 < c2 < 0.5:
        raise ValueError("c2 must lie in (0, 1/2)")


def build_family(d: int, q: int, delta: float, alpha: float, C: float, c2: float,
                 code_mode: str = "exhaustive", min_hamming: Optional[int] = None,
                 budget: int = 10_000, seed: int = 0) -> LowerBoundFamily:
    _validate_params(d, q, delta, alpha, C, c2)
    b = q**d
    notes = []
    if b < 16:
        msg = f"b = {b} < 16: code size guarantee 2^(b/8) is not the regime the construction assumes"
        warnings.warn(msg)
        notes.append(msg)
    if min_hamming is None:
        min_hamming = math.ceil(b / 8)
    codes = vg_greedy(b, min_hamming, mode=code_mode, budget=budget, seed=seed)
    return LowerBoundFamily(d, q, float(delta), float(alpha), float(C), float(c2), codes,
                            code_mode, int(min_hamming), tuple(notes))


@dataclass
class VerifyReport:
    checks: list
    info: dict

    @property
    def passed(self) -> bool:
        return all(c["pass"] for c in self.checks)

    def to_dict(self) -> dict:
        return {"passed": self.passed, "checks": self.checks, "info": self.info}


def _check(name, lhs, rhs, ok):
    return {"name": name, "lhs": float(lhs), "rhs": float(rhs), "pass": bool(ok)}


def holder_seminorm(fn, beta: float, d: int, points: int = 1201, seed: int = 0) -> float:
    """Largest ``|f(x) - f(y)| / |x - y|^beta`` over a dense point set (all pairs)."""
    if d == 1:
        X = np.linspace(0.0, 1.0, points).reshape(-1, 1)
    else:
        X = np.random.default_rng(seed).random((points, d))
    v = fn(X)
    best = 0.0
    for i in range(X.shape[0] - 1):
        dist = np.linalg.norm(X[i + 1:] - X[i], axis=1)
        ratio = np.abs(v[i + 1:] - v[i]) / dist**beta
        best = max(best, float(ratio.max()))
    return best


def verify_family(family: LowerBoundFamily, target_margin: MarginSpec,
                  holder: Optional[dict] = None, t_grid=None, codes_checked: int = 4) -> VerifyReport:
    from acbound.margin import check_margin_2_15

    fam = family
    tol = 1e-12
    checks = []
    info = {"a": fam.a, "w": fam.w, "bw": fam.bw, "margin_constant": fam.margin_constant,
            "C_M": fam.margin_constant, "lambda0": fam.lambda0, "n_codes": fam.n_codes}

    grid = (np.arange(4096 * max(1, fam.q // 16)) + 0.5) / (4096 * max(1, fam.q // 16))
    X = grid.reshape(-1, 1) if fam.d == 1 else np.random.default_rng(0).random((20000, fam.d))
    dev = max(float(np.max(np.abs(fam.eta_values(s, X) - 0.5))) for s in range(min(codes_checked, fam.n_codes)))
    dev = max(dev, fam.a / 2.0)
    checks.append(_check("eta_range", dev, 0.25, dev <= 0.25 + tol))

    if fam.n_codes >= 2:
        hmin = kernels.min_pairwise_hamming(pack_codes(fam.codes))
        need = math.ceil(fam.b / 8)
        checks.append(_check("code_separation", hmin, need, hmin >= need))
        l2_max = fam.b * fam.w * fam.a**2
        rhs = fam.C * fam.delta ** ((2.0 + fam.alpha) / (1.0 + fam.alpha))
        checks.append(_check("pair_l2_bound", l2_max, rhs, l2_max <= rhs + tol))
        l1_min = hmin * fam.w
        rhs = fam.C / 8.0 * fam.delta ** (fam.alpha / (1.0 + fam.alpha))
        checks.append(_check("pair_l1_separation", l1_min, rhs, l1_min >= rhs - tol))

    checks.append(_check("margin_constant", fam.margin_constant, target_margin.C_M,
                         fam.margin_constant <= target_margin.C_M * (1 + 1e-12)))
    if t_grid is None:
        t_grid = np.linspace(0.0, 1.0, 102)[1:-1]
    rep = check_margin_2_15(fam.distribution(0), target_margin.alpha, target_margin.C_M, t_grid)
    checks.append(_check("margin_2_15", rep.worst_ratio, 1.0, rep.verdict))

    if holder is not None:
        beta, L = float(holder["beta"]), float(holder["L"])
        if beta <= 1.0:
            semi = max(holder_seminorm(lambda Z, s=s: fam.eta_values(s, Z), beta, fam.d)
                       for s in range(min(2, fam.n_codes)))
            checks.append(_check("holder_seminorm", semi, L, semi <= L))
        psi_semi = holder_seminorm(lambda Z: bump_eval(fam.profile, Z), min(beta, 1.0), 1)
        info["holder_scaling"] = psi_semi * fam.q**beta * fam.delta ** (1.0 / (1.0 + fam.alpha))
    return VerifyReport(checks, info)
