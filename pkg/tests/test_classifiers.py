import math

import numpy as np
import pytest

from acbound.classifiers import (
    NetDictionary,
    RuleClass,
    build_holder_net,
    class_erm,
    covering_number_finite,
    epsilon_schedule,
    net_erm,
    snake_order,
)
from acbound.core import Dataset, PredictionRule, RegressionFn, empirical_risk
from acbound.family import build_family
from tests.oracles import brute_erm


def test_epsilon_schedule():
    assert epsilon_schedule(1024, 1, 1) == pytest.approx(0.17677670, abs=1e-8)
    assert epsilon_schedule(1, 2.0, 0.3) == 1.0
    with pytest.warns(UserWarning):
        assert epsilon_schedule(1000, 1, math.inf) == 1.0
    with pytest.raises(ValueError):
        epsilon_schedule(0, 1, 1)


def test_snake_order_faces():
    for g, d in [(3, 2), (4, 3), (2, 4)]:
        order = snake_order(g, d)
        assert sorted(order.tolist()) == list(range(g**d))
        coords = np.array(np.unravel_index(order, (g,) * d)).T
        assert np.all(np.abs(np.diff(coords, axis=0)).sum(axis=1) == 1)


@pytest.mark.parametrize("eps", [0.5, 0.3, 0.1])
def test_holder_net_flat_class(eps):
    net = build_holder_net(1, 1.0, 0.0, eps)
    assert net.size == math.ceil(2 / eps) + 1
    vals = sorted(float(net.lattice.member(k)(np.array([[0.3]]))[0]) for k in range(net.size))
    assert vals[0] == 0 and vals[-1] == 1


def test_holder_net_rejects_rough_smoothness():
    with pytest.raises(ValueError, match="not supported"):
        build_holder_net(1, 1.5, 1.0, 0.2)


def test_holder_net_size_matches_enumeration():
    lat = build_holder_net(2, 1.0, 1.0, 0.5).lattice
    V = len(lat.levels)
    A = lat.allowed
    # direct count of admissible level sequences along the path
    count = np.ones(V, dtype=object)
    for _ in range(lat.n_cells - 1):
        count = np.array([sum(count[u] for u in range(V) if A[v, u]) for v in range(V)], dtype=object)
    assert lat.size == int(count.sum())
    assert lat.log_size == pytest.approx(math.log(lat.size), rel=1e-12)


def _random_lipschitz(rng, knots=21):
    x = np.linspace(0, 1, knots)
    steps = rng.uniform(-1, 1, knots - 1) * np.diff(x)
    y = np.concatenate([[0.0], np.cumsum(steps)])
    y = y - y.min() + rng.uniform(0, max(0.0, 1 - (y.max() - y.min())))
    return x, np.clip(y, 0, 1)


def test_holder_net_covers_lipschitz(rng):
    net = build_holder_net(1, 1.0, 1.0, 0.5)
    lat = net.lattice
    assert lat.g == 4 and lat.step == 0.25
    centres = (np.arange(lat.g) + 0.5).reshape(-1, 1) / lat.g
    table = np.array([lat.member(k)(centres) for k in range(lat.size)])
    for _ in range(100):
        x, y = _random_lipschitz(rng)
        # knots sit on a 1/20 grid, a refinement of the 1/4 cells: extremes per cell are at knots
        cell = np.minimum((x * lat.g).astype(int), lat.g - 1)
        lo = np.array([min(y[(cell == c) | (np.isclose(x, c / lat.g)) | (np.isclose(x, (c + 1) / lat.g))])
                       for c in range(lat.g)])
        hi = np.array([max(y[(cell == c) | (np.isclose(x, c / lat.g)) | (np.isclose(x, (c + 1) / lat.g))])
                       for c in range(lat.g)])
        sup = np.maximum(np.abs(table - lo), np.abs(table - hi)).max(axis=1)
        assert sup.min() <= 0.5 + 1e-12


def test_holder_net_entropy_slopes():
    eps = np.array([0.4, 0.2, 0.1, 0.05])
    for beta, target in [(1.0, 1.0), (0.5, 2.0)]:
        logs = [build_holder_net(1, beta, 1.0, e).log_size for e in eps]
        slope = np.polyfit(np.log(1 / eps), np.log(logs), 1)[0]
        assert abs(slope - target) <= 0.3 * target


def test_net_erm_constant_pair():
    net = NetDictionary([RegressionFn.constant(0.9), RegressionFn.constant(0.1)])
    D = Dataset(np.linspace(0.05, 0.95, 10).reshape(-1, 1), np.ones(10))
    f = net_erm(net, D)
    assert np.all(f(D.X) == 1)


def test_net_erm_duplicates_smallest_index():
    a, b = RegressionFn.constant(0.9), RegressionFn.constant(0.7)
    net = NetDictionary([RegressionFn.constant(0.2), a, b])
    D = Dataset([[0.1], [0.4], [0.8]], [1, 1, 0])
    f = net_erm(net, D)
    assert f.eta is a
    rules = [PredictionRule.thresholded(m) for m in (a, b)]
    assert empirical_risk(rules[0], D) == empirical_risk(rules[1], D)


def test_net_erm_empty_rejected(ref_family):
    with pytest.raises(ValueError):
        net_erm(NetDictionary.from_family(ref_family, [0, 1]), None)


def test_net_erm_family_recovers_truth(strong_family):
    f = strong_family
    net = NetDictionary.from_family(f)
    for s in f.select_codes(3):
        hits = 0
        for r in range(200):
            rule = net_erm(net, f.sample_dataset(s, 4096, 1000 * s + r))
            hits += np.array_equal(rule.labels, f.bayes_labels(s))
        assert hits / 200 >= 0.95


def test_net_erm_family_fast_path_agrees_with_scan(ref_family, rng):
    f = ref_family
    idx = [int(i) for i in rng.choice(f.n_codes, 40, replace=False)]
    net = NetDictionary.from_family(f, idx)
    for r in range(10):
        D = f.sample_dataset(idx[r], 300, r)
        fast = net_erm(net, D)
        errs = [empirical_risk(f.bayes_rule(i), D) for i in idx]
        assert np.array_equal(fast.labels, f.bayes_labels(idx[int(np.argmin(errs))]))


def test_net_erm_lattice_matches_brute(rng):
    import itertools

    net = build_holder_net(1, 1.0, 2.0, 0.5)
    lat = net.lattice
    lv = np.asarray(lat.levels)
    A = lat.allowed
    # lexicographic enumeration of admissible level sequences = member order
    paths = np.array([p for p in itertools.product(range(len(lv)), repeat=lat.n_cells)
                      if all(A[p[i], p[i + 1]] for i in range(lat.n_cells - 1))])
    assert len(paths) == lat.size
    for k in (0, 17, lat.size - 1):
        centres = (np.arange(lat.g) + 0.5).reshape(-1, 1) / lat.g
        assert np.array_equal(lat.member(k)(centres), lv[paths[k]])
    up = lv[paths] >= 0.5
    for _ in range(10):
        X = rng.random((40, 1))
        y = (rng.random(40) < X[:, 0]).astype(int)
        D = Dataset(X, y)
        cell = np.minimum((X[:, 0] * lat.g).astype(int), lat.g - 1)
        ones = np.bincount(cell, weights=y, minlength=lat.g)
        total = np.bincount(cell, minlength=lat.g)
        errs = np.where(up, total - ones, ones).sum(axis=1)
        chosen = net_erm(net, D)
        assert int(np.count_nonzero(chosen(D.X) != D.y)) == errs.min()
        first = paths[int(np.argmin(errs))]
        centres = (np.arange(lat.g) + 0.5).reshape(-1, 1) / lat.g
        assert np.array_equal(chosen(centres), up[int(np.argmin(errs))].astype(np.int8))
        assert np.array_equal(chosen.eta(centres), lv[first])


def test_class_erm_picks_bayes(strong_family):
    f = strong_family
    good = f.bayes_rule(0)
    bad = PredictionRule.cellwise(f, 1 - f.bayes_labels(0), default=0)
    cls = RuleClass([good, bad])
    hits = sum(class_erm(cls, f.sample_dataset(0, 1000, r)) is good for r in range(200))
    assert hits / 200 >= 0.99


def test_class_erm_empty_cell_label_one(ref_family):
    f = ref_family
    D = f.sample_dataset(0, 50, 3)
    cells = f.cell_of(D.X)
    keep = cells != 4
    D2 = Dataset(D.X[keep], np.zeros(int(keep.sum())))
    rule = class_erm(RuleClass.product(f), D2)
    assert rule.labels[4] == 1
    assert np.all(rule.labels[np.unique(cells[keep & (cells >= 0)])] == 0)


def test_class_erm_matches_brute_force_b4(rng):
    fam = build_family(d=1, q=4, delta=0.5, alpha=1.0, C=0.5, c2=0.25)
    assert fam.b == 4
    cls = RuleClass.product(fam)
    for r in range(50):
        D = fam.sample_dataset(int(rng.integers(fam.n_codes)), int(rng.integers(1, 40)), r)
        D = Dataset(D.X, rng.integers(0, 2, D.n))
        best_err, _ = brute_erm(fam.cell_of(D.X), D.y, fam.b)
        rule = class_erm(cls, D)
        assert int(np.count_nonzero(rule(D.X) != D.y)) == best_err


def test_class_erm_permutation_and_duplication(ref_family, rng):
    f = ref_family
    cls = RuleClass.product(f)
    D = f.sample_dataset(2, 400, 9)
    base = class_erm(cls, D)
    for _ in range(5):
        P = D.permuted(rng.permutation(D.n))
        assert np.array_equal(class_erm(cls, P).labels, base.labels)
    doubled = Dataset(np.vstack([D.X, D.X]), np.concatenate([D.y, D.y]))
    assert np.array_equal(class_erm(cls, doubled).labels, base.labels)
    assert class_erm(cls, doubled).default == base.default


def test_class_erm_explicit_ties_smallest_index():
    rules = [PredictionRule.constant(1), PredictionRule.constant(0)]
    D = Dataset([[0.2], [0.6]], [0, 1])
    assert class_erm(RuleClass(rules), D) is rules[0]
    with pytest.raises(ValueError):
        RuleClass([])


def test_covering_numbers(ref_family):
    f = ref_family
    idx = f.select_codes(30)

    def l1(i, j):
        return f.pairwise_stats(i, j)["l1_bayes"]

    assert covering_number_finite(idx, l1, 1.0) == 1
    assert covering_number_finite(idx + idx[:5], l1, 0.0) == 30
    assert covering_number_finite(idx, l1, f.w) == 30
    assert covering_number_finite(idx[:12], l1, f.w, exact=True) == 12
    with pytest.raises(ValueError):
        covering_number_finite(idx, l1, f.w, exact=True)


def test_covering_exact_vs_greedy_points():
    pts = [0.0, 0.1, 0.2, 0.5, 0.55, 0.9]
    dist = lambda a, b: abs(a - b)
    assert covering_number_finite(pts, dist, 0.1, exact=True) == 3
    assert covering_number_finite(pts, dist, 0.1) >= 3
