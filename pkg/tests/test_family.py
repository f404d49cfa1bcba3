import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from acbound.core import MarginSpec, PredictionRule
from acbound.family import (
    BumpProfile,
    LowerBoundFamily,
    build_family,
    bump_eval,
    holder_q,
    pack_codes,
    verify_family,
    vg_greedy,
)
from acbound import kernels
from tests.oracles import bayes_risk_1d, pair_integrals_1d, s_step, tau


# bump ------------------------------------------------------------------------

def test_bump_plateau_and_support():
    prof = BumpProfile(0.3)
    assert bump_eval(prof, [[0.5]])[0] == 0.3
    assert bump_eval(prof, [[0.5, 0.25, 0.75]])[0] == 0.3
    assert bump_eval(prof, [[0.125]])[0] == 0.0
    assert bump_eval(prof, [[0.05, 0.5]])[0] == 0.0
    assert bump_eval(prof, [[3 / 16]])[0] == pytest.approx(0.15, abs=1e-15)


def test_bump_matches_independent_ramp():
    prof = BumpProfile(0.25)
    u = np.linspace(0, 1, 2001)
    ours = bump_eval(prof, u.reshape(-1, 1))
    ref = np.array([0.25 * tau(v) for v in u])
    assert np.max(np.abs(ours - ref)) <= 1e-15


def test_bump_strictly_below_plateau_off_center():
    prof = BumpProfile(0.25)
    u = np.linspace(0.13, 0.245, 200)
    assert np.all(bump_eval(prof, u.reshape(-1, 1)) < 0.25)
    assert np.all(bump_eval(prof, u.reshape(-1, 1)) >= 0)


def test_bump_rejects_outside_cube():
    with pytest.raises(ValueError):
        bump_eval(BumpProfile(0.25), [[1.2]])


def test_smooth_step_reference():
    assert s_step(0.5) == 0.5


# codes -----------------------------------------------------------------------

def _all_pairs_min_hamming(codes):
    c = (codes > 0).astype(np.int64)
    best = c.shape[1] + 1
    for i in range(len(c) - 1):
        best = min(best, int(np.abs(c[i + 1:] - c[i]).sum(axis=1).min()))
    return best


def test_vg_greedy_b16_hamming2():
    codes = vg_greedy(16, 2)
    assert codes.shape == (2**15, 16)
    assert len(codes) >= 2 ** (16 / 8)
    assert kernels.min_pairwise_hamming(pack_codes(codes)) >= 2
    # even-weight words are a perfect distance-2 packing; greedy finds exactly that size
    assert len({tuple(r) for r in codes.tolist()}) == 2**15


@pytest.mark.parametrize("b,h", [(8, 3), (10, 4), (12, 2), (9, 1)])
def test_vg_greedy_small_exhaustive_pairs(b, h):
    codes = vg_greedy(b, h)
    if len(codes) > 1:
        assert _all_pairs_min_hamming(codes) >= h
    if h <= 1:
        assert len(codes) == 2**b


def test_vg_greedy_size_bound_default_separation():
    for b in (8, 16, 20):
        codes = vg_greedy(b)
        assert len(codes) >= 2 ** (b / 8)


def test_vg_greedy_is_lexicographic_and_maximal():
    codes = vg_greedy(6, 3)
    bits = (codes > 0).astype(int)
    ints = [int("".join(map(str, r)), 2) for r in bits]
    assert ints == sorted(ints)
    assert ints[0] == 0
    # maximality: every word is within distance < 3 of some codeword
    for w in range(64):
        word = np.array([(w >> (5 - j)) & 1 for j in range(6)])
        assert np.min(np.abs(bits - word).sum(axis=1)) < 3


def test_vg_greedy_limits():
    with pytest.raises(ValueError, match="enumeration too large"):
        vg_greedy(25, 4)
    codes = vg_greedy(32, 4, mode="randomized", budget=300, seed=1)
    assert kernels.min_pairwise_hamming(pack_codes(codes)) >= 4


# build / derived constants ---------------------------------------------------

def test_reference_constants(ref_family):
    f = ref_family
    a = 0.25 * math.sqrt(0.2)
    w = 0.5 * math.sqrt(0.2) / 16
    assert f.b == 16
    assert f.a == pytest.approx(a, rel=1e-15) and f.a == pytest.approx(0.1118034, abs=1e-7)
    assert f.w == pytest.approx(w, rel=1e-15) and f.w == pytest.approx(0.013975425, abs=1e-9)
    assert f.bw == pytest.approx(0.2236068, abs=1e-7)
    assert f.lambda0 == pytest.approx(4.8828125e-4, rel=1e-15)
    assert f.margin_constant == pytest.approx(4.0)
    assert f.cell_excess == pytest.approx(0.0015625, rel=1e-14)
    assert f.null_volume == pytest.approx(0.25)


def test_build_errors_name_constraint():
    with pytest.raises(ValueError, match="c2"):
        build_family(1, 16, 0.2, 1, 0.5, 0.6)
    with pytest.raises(ValueError, match="delta"):
        build_family(1, 16, 1.2, 1, 0.5, 0.25)
    with pytest.raises(ValueError, match="C must"):
        build_family(1, 16, 0.2, 1, 1.5, 0.25)
    with pytest.raises(ValueError, match="q must"):
        build_family(1, 0, 0.2, 1, 0.5, 0.25)


def test_build_warns_small_b():
    with pytest.warns(UserWarning, match="b = 4"):
        f = build_family(1, 4, 0.2, 1, 0.5, 0.25)
    assert f.warnings


def test_bw_limit_at_delta_one():
    f = build_family(1, 16, 1 - 1e-12, 1, 1.0, 0.25)
    assert f.bw == pytest.approx(1.0, abs=1e-11)


def test_holder_q():
    assert holder_q(0.2, 1, 1, 6) == 14
    assert holder_q(1.0, 1, 1, 1) == 1
    assert holder_q(0.2, 1, math.inf, 2.5) == 3


# eta ---------------------------------------------------------------------------

def test_eta_values(ref_family):
    f = ref_family
    s = f.codes[1]
    j_plus = int(np.flatnonzero(s > 0)[0])
    j_minus = int(np.flatnonzero(s < 0)[0])
    assert f.eta_values(1, [[(j_plus + 0.5) / 16]])[0] == pytest.approx(0.5559017, abs=1e-7)
    assert f.eta_values(1, [[(j_minus + 0.5) / 16]])[0] == pytest.approx(0.4440983, abs=1e-7)
    assert f.eta_values(1, [[(j_plus + 0.05) / 16]])[0] == 0.5


def test_eta_range_dense(ref_family):
    X = np.linspace(0, 1, 50001).reshape(-1, 1)
    for s in range(5):
        v = ref_family.eta_values(s, X)
        assert v.min() >= 0.25 and v.max() <= 0.75


def test_cell_geometry_2d():
    f = build_family(2, 4, 0.3, 2.0, 0.8, 0.2)
    X = np.array([[0.125 + 0.01, 0.375], [0.9, 0.1], [0.0, 0.0]])
    cells = f.cell_of(X)
    assert cells[0] == 0 * 4 + 1
    assert cells[1] == 3 * 4 + 0
    assert cells[2] == -1
    dist = f.distribution(0)
    mass = sum(bx.density * bx.volume for bx in dist.boxes)
    assert mass == pytest.approx(1.0)


# sampling ----------------------------------------------------------------------

def test_sampler_deterministic(ref_family):
    a = ref_family.sample_dataset(1, 500, 99)
    b = ref_family.sample_dataset(1, 500, 99)
    assert np.array_equal(a.X, b.X) and np.array_equal(a.y, b.y)
    assert a.provenance.family_id == ref_family.family_id
    assert a.provenance.seed == 99 and a.provenance.code_index == 1


def test_sampler_frequencies(ref_family):
    f = ref_family
    n = 10**6
    s = f.select_codes(2)[1]  # farthest from the all-minus word: every cell is +1
    assert np.all(f.codes[s] > 0)
    D = f.sample_dataset(s, n, 7)
    cells = f.cell_of(D.X)
    plateau = cells >= 0
    frac = plateau.mean()
    sd = math.sqrt(f.bw * (1 - f.bw) / n)
    assert abs(frac - f.bw) <= 4 * sd
    assert abs(frac - 0.2236) <= 0.0015
    pos = plateau & (f.codes[s][np.maximum(cells, 0)] > 0)
    p1 = (1 + f.a) / 2
    m = pos.sum()
    assert abs(D.y[pos].mean() - p1) <= 4 * math.sqrt(p1 * (1 - p1) / m)
    assert abs(D.y[pos].mean() - 0.5559) <= 0.002
    # never on a ramp: plateau points are in [1/4, 3/4] of their cell
    u = (D.X[plateau, 0] * 16) % 1.0
    assert np.all((u >= 0.25) & (u <= 0.75))
    null = ~plateau
    assert abs(D.y[null].mean() - 0.5) <= 4 * math.sqrt(0.25 / null.sum())
    occ = np.bincount(cells[plateau], minlength=16) / n
    assert np.all(np.abs(occ - f.w) <= 4 * math.sqrt(f.w * (1 - f.w) / n))


def test_null_rejection_acceptance_rate(ref_family):
    rng = np.random.default_rng(3)
    cand = rng.random(400_000)
    u = (cand * 16) % 1.0
    rate = np.mean((u <= 1 / 8) | (u >= 7 / 8))
    assert abs(rate - 0.25) <= 4 * math.sqrt(0.25 * 0.75 / 400_000)


# exact risks -------------------------------------------------------------------

def test_exact_bayes_risk(ref_family):
    assert ref_family.exact_bayes_risk() == pytest.approx(0.4875, abs=1e-15)
    ref = bayes_risk_1d(ref_family.codes[0], 16, 0.2, 1.0, 0.5, 0.25)
    assert abs(ref - 0.4875) <= 1e-6
    assert build_family(1, 16, 1e-12, 1, 0.5, 0.25).exact_bayes_risk() == pytest.approx(0.5)


def test_exact_excess_cellwise(ref_family):
    f = ref_family
    lab = f.bayes_labels(1)
    assert f.exact_excess_cellwise(1, PredictionRule.cellwise(f, lab)) == 0
    one = lab.copy()
    one[4] ^= 1
    assert f.exact_excess_cellwise(1, PredictionRule.cellwise(f, one)) == pytest.approx(0.0015625)
    allf = 1 - lab
    assert f.exact_excess_cellwise(1, PredictionRule.cellwise(f, allf)) == pytest.approx(0.025)
    assert f.exact_excess_cellwise(1, PredictionRule.cellwise(f, allf, default=0)) == pytest.approx(0.025)
    with pytest.raises(ValueError, match="use quadrature"):
        f.exact_excess_cellwise(1, PredictionRule.constant(1))


def test_exact_excess_additive(ref_family, rng):
    f = ref_family
    for _ in range(20):
        lab = rng.integers(0, 2, f.b)
        k = int(np.count_nonzero(lab != f.bayes_labels(0)))
        assert f.exact_excess_cellwise(0, PredictionRule.cellwise(f, lab)) == pytest.approx(k * f.cell_excess)


# pairwise stats ------------------------------------------------------------------

def test_pairwise_self_is_zero(ref_family):
    s = ref_family.pairwise_stats(3, 3)
    assert all(v == 0 for v in s.values())


def test_pairwise_h2_values(ref_family):
    f = ref_family
    i, j = 0, 1
    st_ = f.pairwise_stats(i, j)
    assert st_["hamming"] == 2
    assert st_["chi2"] == pytest.approx(2 * 0.013975425 * 0.0125 * 4 / 0.9875, rel=1e-7)
    assert st_["chi2"] == pytest.approx(1.41523e-3, rel=1e-5)
    assert 8 * st_["l2_eta_sq"] == pytest.approx(2.79509e-3, rel=1e-5)
    assert 8 * st_["l2_eta_sq"] >= st_["chi2"]
    # the Bayes rules differ on H plateau cubes of mass w each
    assert st_["l1_bayes"] == pytest.approx(2 * f.w, rel=1e-15)


def _random_family(rng):
    return build_family(1, int(rng.choice([16, 20])), float(rng.uniform(0.05, 0.9)),
                        float(rng.choice([0.5, 1, 2, 4])), float(rng.uniform(0.1, 1)),
                        float(rng.uniform(0.05, 0.45)))


def test_pairwise_closed_forms_match_integration(rng):
    fams = [_random_family(rng) for _ in range(5)]
    for _ in range(20):
        f = fams[int(rng.integers(5))]
        i, j = rng.choice(f.n_codes, 2, replace=False)
        cf = f.pairwise_stats(int(i), int(j))
        ni = pair_integrals_1d(f.codes[i], f.codes[j], f.q, f.delta, f.alpha, f.C, f.c2)
        for k in ("l2_eta_sq", "l1_bayes", "chi2", "kl"):
            assert cf[k] == pytest.approx(ni[k], rel=1e-8), k


def test_pairwise_inequalities_all_pairs(ref_family):
    f = ref_family
    idx = f.select_codes(40)
    for i in idx:
        for j in idx:
            s = f.pairwise_stats(i, j)
            assert s["chi2"] <= 8 * s["l2_eta_sq"] + 1e-18
            assert s["kl"] <= s["chi2"] / 2 + 1e-18


def test_log_ratio_inequality_analytic():
    a = np.linspace(1e-6, 0.5, 10001)
    assert np.all(a * np.log((1 + a) / (1 - a)) <= a * 2 * a / (1 - a * a) + 1e-18)


# verify / serialisation -----------------------------------------------------------

def test_verify_reference(ref_family):
    rep = verify_family(ref_family, MarginSpec(1.0, 4.0))
    assert rep.passed
    names = {c["name"] for c in rep.checks}
    assert {"eta_range", "code_separation", "pair_l2_bound", "pair_l1_separation", "margin_2_15"} <= names
    l2 = next(c for c in rep.checks if c["name"] == "pair_l2_bound")
    assert l2["lhs"] == pytest.approx(2.795085e-3, rel=1e-6)
    assert l2["rhs"] == pytest.approx(0.0447214, rel=1e-6)
    l1 = next(c for c in rep.checks if c["name"] == "pair_l1_separation")
    assert l1["lhs"] == pytest.approx(l1["rhs"], rel=1e-12)


def test_verify_fails_for_small_target(ref_family):
    rep = verify_family(ref_family, MarginSpec(1.0, 1.0))
    assert not rep.passed


def test_verify_holder_check():
    f = build_family(1, 16, 0.2, 1, 0.5, 0.25)
    rep = verify_family(f, MarginSpec(1.0, 4.0), holder={"beta": 1.0, "L": 100.0})
    assert any(c["name"] == "holder_seminorm" for c in rep.checks)
    assert "holder_scaling" in rep.info


def test_json_roundtrip_bit_exact(ref_family):
    text = ref_family.to_json()
    g = LowerBoundFamily.from_json(text)
    assert g.to_json() == text
    assert g.family_id == ref_family.family_id
    assert np.array_equal(g.codes, ref_family.codes)
    assert g.a == ref_family.a and g.w == ref_family.w


@settings(max_examples=25, deadline=None)
@given(delta=st.floats(0.01, 0.99), alpha=st.sampled_from([0.5, 1.0, 2.0, 4.0]),
       C=st.floats(0.01, 1.0), c2=st.floats(0.01, 0.49))
def test_constants_relations(delta, alpha, C, c2):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        f = LowerBoundFamily(1, 16, delta, alpha, C, c2, np.ones((1, 16)))
    assert f.a * f.w == pytest.approx(C * c2 * delta / 16, rel=1e-12)
    assert f.bw <= 1 + 1e-15
    assert f.a < 0.5
    assert f.exact_bayes_risk() == pytest.approx(0.5 - C * c2 * delta / 2, rel=1e-12)
