"""Trainable classifiers: sup-norm net ERM and ERM over rule classes.

Both procedures break ties by the smallest member index, so their output is a
deterministic function of the class and the (unordered) sample.
"""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from acbound import kernels
from acbound.core import Dataset, PredictionRule, RegressionFn, bayes_rule


def epsilon_schedule(n: int, alpha: float, r: float) -> float:
    """``n^{-1/(2 + alpha + r)}``."""
    if n < 1 or not alpha > 0 or not r > 0:
        raise ValueError("need n >= 1, alpha > 0, r > 0")
    if math.isinf(r) or math.isinf(alpha):
        warnings.warn("infinite exponent: schedule degenerates to epsilon = 1")
        return 1.0
    return float(n ** (-1.0 / (2.0 + alpha + r)))


def snake_order(g: int, d: int) -> np.ndarray:
    """Boustrophedon enumeration of the ``g^d`` lattice; consecutive cells share a face.

    Returns the row-major linear index of each position along the path.
    """
    if d == 1:
        return np.arange(g)
    sub = snake_order(g, d - 1)
    out = []
    for i in range(g):
        block = sub if i % 2 == 0 else sub[::-1]
        out.append(i * g ** (d - 1) + block)
    return np.concatenate(out)


@dataclass(frozen=True)
class HolderLattice:
    """Piecewise-constant functions on a ``g^d`` lattice with levels ``k eps / 2``.

    Adjacent cells along :func:`snake_order` may differ by at most ``jump``.
    Members are enumerated in lexicographic order of their level sequence
    along the snake path and never materialised.
    """

    d: int
    g: int
    levels: tuple
    jump: float

    @property
    def step(self) -> float:
        return 1.0 / self.g

    @property
    def n_cells(self) -> int:
        return self.g**self.d

    @cached_property
    def allowed(self) -> np.ndarray:
        lv = np.asarray(self.levels)
        return np.abs(lv[:, None] - lv[None, :]) <= self.jump * (1 + 1e-12)

    @cached_property
    def log_size(self) -> float:
        A = self.allowed.astype(np.float64)
        v = np.ones(len(self.levels))
        acc = 0.0
        for _ in range(self.n_cells - 1):
            v = A @ v
            s = v.max()
            acc += math.log(s)
            v /= s
        return acc + math.log(v.sum())

    @cached_property
    def size(self) -> int:
        A = self.allowed
        V = len(self.levels)
        nbrs = [np.flatnonzero(A[i]).tolist() for i in range(V)]
        v = [1] * V
        for _ in range(self.n_cells - 1):
            v = [sum(v[j] for j in nbrs[i]) for i in range(V)]
        return sum(v)

    def cell_index(self, X) -> np.ndarray:
        """Position along the snake path of the lattice cell containing each point."""
        X = np.asarray(X, dtype=np.float64)
        idx = np.minimum((X / self.step).astype(np.int64), self.g - 1)
        lin = np.zeros(X.shape[0], dtype=np.int64)
        for j in range(self.d):
            lin = lin * self.g + idx[:, j]
        return self._pos_of_linear[lin]

    @cached_property
    def _pos_of_linear(self) -> np.ndarray:
        order = snake_order(self.g, self.d)
        pos = np.empty_like(order)
        pos[order] = np.arange(order.size)
        return pos

    def function(self, level_path) -> RegressionFn:
        """Tabulated regression function for a level index sequence along the snake."""
        lv = np.asarray(self.levels)[np.asarray(level_path)]
        vals = np.empty(self.n_cells)
        vals[snake_order(self.g, self.d)] = lv
        return RegressionFn.tabulated(vals.reshape((self.g,) * self.d), self.step)

    def member(self, k: int) -> RegressionFn:
        """The ``k``-th member in lexicographic order (``0 <= k < size``)."""
        if not 0 <= k < self.size:
            raise IndexError("member index out of range")
        A = self.allowed
        V = len(self.levels)
        # completions[i][v]: number of valid suffixes of length n_cells - i starting at v
        comp = [[1] * V]
        for _ in range(self.n_cells - 1):
            prev = comp[-1]
            comp.append([sum(prev[u] for u in range(V) if A[v, u]) for v in range(V)])
        comp.reverse()
        path = []
        cand = range(V)
        for i in range(self.n_cells):
            for v in cand:
                if k < comp[i][v]:
                    path.append(v)
                    break
                k -= comp[i][v]
            cand = [u for u in range(V) if A[path[-1], u]]
        return self.function(path)


class NetDictionary:
    """Ordered finite set of regression functions with a sup-norm radius."""

    def __init__(self, members=None, epsilon: float = 0.0, meta: Optional[dict] = None, lattice=None):
        if lattice is None:
            members = list(members or [])
            if not members:
                raise ValueError("net must be nonempty")
        self.members = members
        self.lattice = lattice
        self.epsilon = float(epsilon)
        self.meta = dict(meta or {})

    @property
    def size(self) -> int:
        return self.lattice.size if self.lattice is not None else len(self.members)

    @property
    def log_size(self) -> float:
        return self.lattice.log_size if self.lattice is not None else math.log(len(self.members))

    @classmethod
    def from_family(cls, family, indices=None) -> "NetDictionary":
        idx = range(family.n_codes) if indices is None else indices
        return cls([family.eta(i) for i in idx], 0.0, {"kind": "family", "family_id": family.family_id})


def build_holder_net(d: int, beta: float, L: float, epsilon: float) -> NetDictionary:
    """Sup-norm ``epsilon``-net of ``[0,1]``-valued ``(beta, L)``-Hölder functions, ``beta <= 1``.

    Lattice step ``h = (epsilon / (2L))^{1/beta}``, levels ``{0, eps/2, ..., 1}``,
    neighbouring cells along the snake path differing by at most ``L h^beta + eps``.
    """
    if beta > 1:
        raise ValueError("beta > 1 not supported")
    if not beta > 0 or L < 0 or not 0 < epsilon < 1:
        raise ValueError("need 0 < beta <= 1, L >= 0, 0 < epsilon < 1")
    if L == 0:
        g, hb = 1, 0.0
    else:
        h = (epsilon / (2.0 * L)) ** (1.0 / beta)
        g = max(1, math.ceil(1.0 / h - 1e-12))
        hb = L * h**beta
    nlev = math.ceil(2.0 / epsilon - 1e-12)
    levels = tuple(sorted({min(k * epsilon / 2.0, 1.0) for k in range(nlev + 1)}))
    lat = HolderLattice(d, g, levels, hb + epsilon)
    meta = {"kind": "holder", "d": d, "beta": beta, "L": L, "epsilon": epsilon, "g": g}
    return NetDictionary(epsilon=epsilon, meta=meta, lattice=lat)


@dataclass
class RuleClass:
    """Explicit list of rules, or every cellwise labelling over a family (``product``)."""

    rules: Optional[list] = None
    family: object = None

    def __post_init__(self):
        if self.family is None and not self.rules:
            raise ValueError("rule class must be nonempty")

    @property
    def kind(self) -> str:
        return "product" if self.family is not None else "explicit"

    @classmethod
    def product(cls, family) -> "RuleClass":
        return cls(family=family)


def ProductClass(family) -> RuleClass:
    return RuleClass.product(family)


def _require_data(D):
    if D is None or D.n == 0:
        raise ValueError("empty sample")


def _family_votes(family, D):
    cells = family.cell_of(D.X)
    idx = np.where(cells < 0, family.b, cells)
    return kernels.vote_counts(idx, D.y, family.b + 1)


def _scan(rules: Sequence[PredictionRule], D: Dataset):
    """Index of the first rule of minimal empirical risk and that risk's mistake count."""
    seen = {}
    best, best_err = -1, None
    votes = {}
    for i, f in enumerate(rules):
        key = f.key()
        if key is not None and key in seen:
            continue
        if key is not None:
            seen[key] = i
        fam = f.family if f.kind == "cellwise" else (
            f.eta.family if f.kind == "thresholded" and f.eta.kind == "cellwise" else None)
        if fam is not None and f.d == D.d:
            if id(fam) not in votes:
                votes[id(fam)] = _family_votes(fam, D)
            ones, total = votes[id(fam)]
            labels = np.append(f.labels if f.kind == "cellwise" else fam.bayes_labels(f.eta.sigma_index),
                               f.default if f.kind == "cellwise" else 1)
            err = int(np.sum(np.where(labels == 1, total - ones, ones)))
        else:
            err = int(np.count_nonzero(f(D.X) != D.y))
        if best_err is None or err < best_err:
            best, best_err = i, err
    return best, best_err


def _family_net_erm(net: NetDictionary, D: Dataset):
    """Vectorised scan when every member is a cellwise regression function of one family."""
    fam = net.members[0].family
    ones, total = _family_votes(fam, D)
    sig = np.array([m.sigma_index for m in net.members])
    labels = fam.codes[sig] > 0
    err = np.where(labels, (total - ones)[:fam.b], ones[:fam.b]).sum(axis=1) + (total[fam.b] - ones[fam.b])
    return int(np.argmin(err))


def net_erm(net: NetDictionary, D: Dataset) -> PredictionRule:
    """Plug-in rule of the net member whose induced rule has minimal empirical risk."""
    _require_data(D)
    if net.lattice is not None:
        lat = net.lattice
        if D.d != lat.d:
            raise ValueError("dataset dimension does not match the net")
        pos = lat.cell_index(D.X)
        up = np.asarray(lat.levels) >= 0.5
        ones, total = kernels.vote_counts(pos, D.y, lat.n_cells)
        cost = np.where(up[None, :], (total - ones)[:, None], ones[:, None])
        path, _ = kernels.viterbi_lex(cost, lat.allowed)
        return bayes_rule(lat.function(path))
    mem = net.members
    if all(m.kind == "cellwise" for m in mem) and len({id(m.family) for m in mem}) == 1 and mem[0].d == D.d:
        return bayes_rule(mem[_family_net_erm(net, D)])
    rules = [bayes_rule(m) for m in mem]
    best, _ = _scan(rules, D)
    return rules[best]


def class_erm(rules: RuleClass, D: Dataset) -> PredictionRule:
    _require_data(D)
    if rules.kind == "product":
        fam = rules.family
        if D.d != fam.d:
            raise ValueError("dataset dimension does not match the family")
        ones, total = _family_votes(fam, D)
        lab = (2 * ones >= total).astype(np.int8)
        return PredictionRule.cellwise(fam, lab[:fam.b], default=int(lab[fam.b]))
    best, _ = _scan(rules.rules, D)
    return rules.rules[best]


def covering_number_finite(members: Sequence, distance, epsilon: float, exact: bool = False) -> int:
    """Greedy (or, for at most 20 members, exact) size of an ``epsilon``-cover by members.

    ``distance(x, y)`` is any pseudometric on the members.
    """
    N = len(members)
    if N == 0:
        return 0
    Dm = np.array([[distance(members[i], members[j]) for j in range(N)] for i in range(N)])
    ball = Dm <= epsilon
    if exact:
        if N > 20:
            raise ValueError("exact cover limited to 20 members")
        for k in range(1, N + 1):
            for combo in itertools.combinations(range(N), k):
                if ball[list(combo)].any(axis=0).all():
                    return k
    uncovered = np.ones(N, dtype=bool)
    count = 0
    while uncovered.any():
        gain = (ball & uncovered[None, :]).sum(axis=1)
        c = int(np.argmax(gain))
        uncovered &= ~ball[c]
        count += 1
    return count
