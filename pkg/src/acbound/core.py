"""Shared domain types and elementary risk operations.

Points live in the unit cube ``[0, 1]^d`` and are handled as ``(n, d)`` float
arrays. Regression functions and prediction rules are vectorised callables
that also carry a structural representation (``cellwise``, ``tabulated`` /
``thresholded`` or ``opaque``) so that risks can be computed in closed form
when the structure allows it.

The Bayes rule breaks ties towards label 1: ``f*(x) = 1{eta(x) >= 1/2}``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np


def as_points(X, d: Optional[int] = None) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1) if d in (None, 1) else X.reshape(1, -1)
    if X.ndim != 2 or X.shape[1] < 1:
        raise ValueError("points must have shape (n, d) with d >= 1")
    if d is not None and X.shape[1] != d:
        raise ValueError(f"expected dimension {d}, got {X.shape[1]}")
    if X.size and (np.any(X < 0.0) or np.any(X > 1.0) or np.any(np.isnan(X))):
        raise ValueError("points must lie in [0, 1]^d")
    return X


@dataclass(frozen=True)
class Provenance:
    family_id: Optional[str] = None
    code_index: Optional[int] = None
    seed: Optional[int] = None


@dataclass(frozen=True, eq=False)
class Dataset:
    """Ordered labelled sample ``((X_i, Y_i))_{i<n}``."""

    X: np.ndarray
    y: np.ndarray
    provenance: Provenance = field(default_factory=Provenance)

    def __post_init__(self):
        X = as_points(self.X)
        y = np.asarray(self.y).reshape(-1)
        if X.shape[0] == 0:
            raise ValueError("empty sample")
        if y.shape[0] != X.shape[0]:
            raise ValueError("X and y lengths differ")
        if not np.all((y == 0) | (y == 1)):
            raise ValueError("labels must be in {0, 1}")
        X = X.copy()
        y = y.astype(np.int8)
        X.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def permuted(self, perm) -> "Dataset":
        perm = np.asarray(perm)
        return Dataset(self.X[perm], self.y[perm], self.provenance)


class RegressionFn:
    """A map ``[0,1]^d -> [0,1]`` with a structural representation."""

    def __init__(self, kind: str, d: int, fn: Callable[[np.ndarray], np.ndarray], **rep):
        if kind not in ("cellwise", "tabulated", "opaque"):
            raise ValueError(f"unknown representation {kind!r}")
        self.kind = kind
        self.d = d
        self._fn = fn
        self.family = rep.get("family")
        self.sigma_index = rep.get("sigma_index")
        self.values = rep.get("values")
        self.step = rep.get("step")

    @classmethod
    def cellwise(cls, family, sigma_index: int) -> "RegressionFn":
        return cls(
            "cellwise",
            family.d,
            lambda X: family.eta_values(sigma_index, X),
            family=family,
            sigma_index=sigma_index,
        )

    @classmethod
    def tabulated(cls, values, step: float) -> "RegressionFn":
        """Piecewise constant on the grid of boxes ``prod [i h, (i+1) h)``; last box closed at 1."""
        values = np.array(values, dtype=np.float64)
        if np.any(values < 0) or np.any(values > 1):
            raise ValueError("tabulated values must lie in [0, 1]")
        values.flags.writeable = False
        g = values.shape[0]
        d = values.ndim

        def fn(X):
            idx = np.minimum((X / step).astype(np.int64), g - 1)
            return values[tuple(idx.T)]

        return cls("tabulated", d, fn, values=values, step=float(step))

    @classmethod
    def opaque(cls, fn, d: int = 1) -> "RegressionFn":
        return cls("opaque", d, fn)

    @classmethod
    def constant(cls, value: float, d: int = 1) -> "RegressionFn":
        return cls.opaque(lambda X: np.full(X.shape[0], float(value)), d)

    def __call__(self, X) -> np.ndarray:
        X = as_points(X, self.d)
        v = np.asarray(self._fn(X), dtype=np.float64).reshape(-1)
        if np.any(v < 0.0) or np.any(v > 1.0):
            raise ValueError("regression function left [0, 1]")
        return v

    def __repr__(self):
        return f"RegressionFn(kind={self.kind!r}, d={self.d})"


class PredictionRule:
    """A map ``[0,1]^d -> {0,1}``.

    ``cellwise`` rules belong to a lower-bound family: one label per cell
    (applied on the open support cube of that cell) plus a default label on
    the null set ``A0``.
    """

    def __init__(self, kind: str, d: int, fn, **rep):
        if kind not in ("cellwise", "thresholded", "opaque"):
            raise ValueError(f"unknown representation {kind!r}")
        self.kind = kind
        self.d = d
        self._fn = fn
        self.family = rep.get("family")
        self.labels = rep.get("labels")
        self.default = rep.get("default")
        self.eta = rep.get("eta")

    @classmethod
    def cellwise(cls, family, labels, default: int = 1) -> "PredictionRule":
        labels = np.asarray(labels, dtype=np.int8).reshape(-1)
        if labels.shape[0] != family.b:
            raise ValueError(f"cellwise rule needs exactly b={family.b} labels")
        if not np.all((labels == 0) | (labels == 1)) or default not in (0, 1):
            raise ValueError("labels must be in {0, 1}")
        labels = labels.copy()
        labels.flags.writeable = False
        default = int(default)

        def fn(X):
            cells = family.cell_of(X)
            out = np.full(X.shape[0], default, dtype=np.int8)
            inside = cells >= 0
            out[inside] = labels[cells[inside]]
            return out

        return cls("cellwise", family.d, fn, family=family, labels=labels, default=default)

    @classmethod
    def thresholded(cls, eta: RegressionFn) -> "PredictionRule":
        return cls("thresholded", eta.d, lambda X: (eta(X) >= 0.5).astype(np.int8), eta=eta)

    @classmethod
    def opaque(cls, fn, d: int = 1) -> "PredictionRule":
        return cls("opaque", d, fn)

    @classmethod
    def constant(cls, label: int, d: int = 1) -> "PredictionRule":
        return cls.opaque(lambda X: np.full(X.shape[0], int(label), dtype=np.int8), d)

    def __call__(self, X) -> np.ndarray:
        X = as_points(X, self.d)
        v = np.asarray(self._fn(X)).reshape(-1)
        if not np.all((v == 0) | (v == 1)):
            raise ValueError("prediction rule returned a non-binary label")
        return v.astype(np.int8)

    def key(self):
        """Hashable identity for structural deduplication (None for opaque rules)."""
        if self.kind == "cellwise":
            return ("cellwise", id(self.family), self.labels.tobytes(), self.default)
        if self.kind == "thresholded" and self.eta.kind == "tabulated":
            lab = (self.eta.values >= 0.5).tobytes()
            return ("tabulated", self.eta.values.shape, self.eta.step, lab)
        if self.kind == "thresholded" and self.eta.kind == "cellwise":
            fam = self.eta.family
            return ("cellwise", id(fam), fam.bayes_labels(self.eta.sigma_index).tobytes(), 1)
        return None

    def __repr__(self):
        return f"PredictionRule(kind={self.kind!r}, d={self.d})"


@dataclass(frozen=True)
class MarginSpec:
    """Margin exponent ``alpha`` (may be ``math.inf``) and constant ``C_M``.

    ``kappa`` and ``c_M`` are always derived; ``c_M_inf`` only matters when
    ``alpha`` is infinite, where ``c_M`` is a free constant (default 1).
    """

    alpha: float
    C_M: float
    c_M_inf: float = 1.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive (or math.inf)")
        if not self.C_M > 0:
            raise ValueError("C_M must be positive")
        if not self.c_M_inf > 0:
            raise ValueError("c_M must be positive")

    @property
    def kappa(self) -> float:
        return 1.0 if math.isinf(self.alpha) else (1.0 + self.alpha) / self.alpha

    @property
    def c_M(self) -> float:
        if math.isinf(self.alpha):
            return self.c_M_inf
        return (2.0 * self.C_M) ** (-1.0 / self.alpha)


@dataclass(frozen=True)
class Box:
    lo: tuple
    hi: tuple
    density: float
    kind: str = "support"
    cell: int = -1

    @property
    def volume(self) -> float:
        return float(np.prod(np.subtract(self.hi, self.lo)))


class Distribution:
    """Joint law of ``(X, Y)``: regression function plus a box decomposition of the marginal.

    Each box carries a constant Lebesgue density; boxes with density 0 are
    kept for bookkeeping but skipped by quadrature. ``family`` and
    ``sigma_index`` are set for lower-bound family members so closed forms
    can short-circuit quadrature.
    """

    def __init__(self, eta: RegressionFn, boxes: Sequence[Box], family=None, sigma_index=None):
        self.eta = eta
        self.boxes = tuple(boxes)
        self.family = family
        self.sigma_index = sigma_index
        self.d = eta.d
        mass = sum(bx.density * bx.volume for bx in self.boxes)
        if abs(mass - 1.0) > 1e-9:
            raise ValueError(f"marginal mass is {mass}, not 1")

    @classmethod
    def uniform(cls, eta: RegressionFn) -> "Distribution":
        return cls(eta, [Box((0.0,) * eta.d, (1.0,) * eta.d, 1.0)])

    def nodes(self, resolution: int, kinds=None):
        """Midpoint-rule nodes and weights over every positive-density box."""
        if resolution < 2:
            raise ValueError("resolution must be at least 2 points per axis")
        pts, wts, ids = [], [], []
        u = (np.arange(resolution) + 0.5) / resolution
        grid = np.stack(np.meshgrid(*([u] * self.d), indexing="ij"), axis=-1).reshape(-1, self.d)
        for k, bx in enumerate(self.boxes):
            if bx.density <= 0 or (kinds is not None and bx.kind not in kinds):
                continue
            lo = np.asarray(bx.lo)
            hi = np.asarray(bx.hi)
            pts.append(lo + grid * (hi - lo))
            wts.append(np.full(grid.shape[0], bx.density * bx.volume / grid.shape[0]))
            ids.append(np.full(grid.shape[0], k))
        if not pts:
            return np.empty((0, self.d)), np.empty(0), np.empty(0, dtype=np.int64)
        return np.concatenate(pts), np.concatenate(wts), np.concatenate(ids)


def _require_distribution(dist):
    if not isinstance(dist, Distribution):
        raise ValueError("unsupported distribution")


def bayes_rule(eta: RegressionFn) -> PredictionRule:
    if eta.kind == "cellwise":
        fam = eta.family
        return PredictionRule.cellwise(fam, fam.bayes_labels(eta.sigma_index), default=1)
    return PredictionRule.thresholded(eta)


def empirical_risk(f: PredictionRule, D: Dataset) -> float:
    if D is None or D.n == 0:
        raise ValueError("empty sample")
    return int(np.count_nonzero(f(D.X) != D.y)) / D.n


def _is_family_rule(f, dist):
    return dist.family is not None and f.kind == "cellwise" and f.family is dist.family


def excess_risk_quadrature(f: PredictionRule, dist, resolution: int = 1000, method: str = "auto") -> float:
    """Excess risk ``int_{f != f*} |2 eta - 1| d mu``.

    ``method="auto"`` uses the closed form for cellwise rules on a family
    member; ``"quadrature"`` forces the midpoint rule.
    """
    _require_distribution(dist)
    if method == "auto" and _is_family_rule(f, dist):
        return dist.family.exact_excess_cellwise(dist.sigma_index, f)
    X, wts, _ = dist.nodes(resolution)
    if X.shape[0] == 0:
        return 0.0
    eta = dist.eta(X)
    fstar = (eta >= 0.5).astype(np.int8)
    dis = f(X) != fstar
    return float(np.sum(wts[dis] * np.abs(2.0 * eta[dis] - 1.0)))


def l1_disagreement(
    f: PredictionRule,
    g: PredictionRule,
    dist,
    exclude_zero_margin: bool = True,
    resolution: int = 1000,
    method: str = "auto",
) -> float:
    """``mu_X(f != g)``, optionally ignoring the set where ``eta == 1/2``."""
    _require_distribution(dist)
    if method == "auto" and _is_family_rule(f, dist) and _is_family_rule(g, dist):
        fam = dist.family
        out = fam.w * int(np.count_nonzero(f.labels != g.labels))
        if not exclude_zero_margin and f.default != g.default:
            out += 1.0 - fam.bw
        return float(out)
    X, wts, _ = dist.nodes(resolution)
    if X.shape[0] == 0:
        return 0.0
    dis = f(X) != g(X)
    if exclude_zero_margin:
        dis &= dist.eta(X) != 0.5
    return float(np.sum(wts[dis]))
