import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from froglab import amenability as am, frog, potential, tree as tm


def connected(t, K):
    K = set(K)
    start = next(iter(K))
    seen, stack = {start}, [start]
    while stack:
        v = stack.pop()
        for w in t.neighbors(v):
            if w in K and w not in seen:
                seen.add(w)
                stack.append(w)
    return seen == K


def brute_force(t, k):
    deg = t.n_children + (np.arange(t.n) > 0)
    ok = [v for v in range(t.n) if t.leaf_mode[v] != tm.CONTINUES]
    best = Fraction(10)
    count = 0
    for s in range(1, k + 1):
        for K in itertools.combinations(ok, s):
            if not connected(t, K):
                continue
            count += 1
            D = int(deg[list(K)].sum())
            best = min(best, Fraction(D - 2 * (s - 1), D))
    return best, count


@pytest.mark.parametrize("t", [
    tm.build_tree(tm.spec("regular", 4, d=3)),
    tm.random_star_tree(2, 3, seed=1),
    tm.random_tw_tree(3, 4, 1, 3, 2),
], ids=["regular", "star", "random"])
def test_expansion_matches_brute_force(t):
    k = 5
    want, count = brute_force(t, k)
    dp = am.enumerate_edge_expansion(t, k)
    en = am.enumerate_edge_expansion(t, k, method="enumerate")
    assert dp.ratio == want == en.ratio
    assert en.subsets_examined == count and en.complete
    ids = [t.index_of(i) for i in dp.certificate]
    assert connected(t, ids)
    deg = t.n_children + (np.arange(t.n) > 0)
    assert dp.volume == deg[ids].sum()


def test_regular_expansion_value():
    t = tm.build_tree(tm.spec("regular", 12, d=3))
    rep = am.enumerate_edge_expansion(t, 10)
    assert rep.ratio == Fraction(2, 5)
    # the running minimum over sizes is the reported value
    assert rep.phi_enumerated == pytest.approx(np.nanmin(rep.per_size))


def test_enumeration_budget_partial():
    t = tm.build_tree(tm.spec("regular", 6, d=3))
    rep = am.enumerate_edge_expansion(t, 8, method="enumerate", budget=1000)
    assert not rep.complete
    with pytest.raises(ValueError):
        am.enumerate_edge_expansion(t, 0)
    with pytest.raises(ValueError):
        am.enumerate_edge_expansion(t, 3, method="magic")


def test_connected_sets_unique():
    t = tm.build_tree(tm.spec("regular", 4, d=3))
    sets = [frozenset(K) for v in range(t.n) for K in am.enumerate_connected_sets(t, v, 4)]
    assert len(sets) == len(set(sets))
    assert all(connected(t, K) for K in sets)


@pytest.mark.parametrize("L", [1, 2, 3])
def test_star_trees_above_analytic_bound(L):
    rep = am.enumerate_edge_expansion(tm.random_star_tree(L, 6, seed=L), 12, L=L)
    assert rep.satisfies_analytic
    assert rep.phi_lower_analytic == Fraction(1, 9 * L * L)


def test_threshold_arithmetic():
    assert am.transience_threshold(Fraction(1, 3)) == Fraction(1, 17)
    assert am.transience_threshold(1) == 1
    assert am.transience_threshold(0.5) == pytest.approx(0.25 / 1.75)
    for bad in (0, -1, Fraction(3, 2)):
        with pytest.raises(ValueError):
            am.transience_threshold(bad)
    for bad in (0, 1.5, True):
        with pytest.raises(ValueError):
            am.tree_iso_bound(bad)
    b = am.TransienceBound.analytic(2)
    assert b.corollary == Fraction(1, 162 * 16) <= b.lambda0


@settings(max_examples=100, deadline=None)
@given(p=st.integers(1, 200), q=st.integers(1, 200))
def test_threshold_identity(p, q):
    phi = Fraction(min(p, q), max(p, q))
    h = phi * phi / 2
    assert am.transience_threshold(phi) == h / (1 - h)


def test_sandwich():
    est = potential.return_probability_sequence(potential.LevelProfile.regular(3, 200), 200)
    rep = am.check_isoperimetric_sandwich(Fraction(1, 9), 0.4, est)
    assert rep.verdict == "Pass" and rep.lower_holds and rep.upper_holds
    assert am.check_isoperimetric_sandwich(Fraction(1, 9), 0.01, est).verdict == "Fail"
    assert am.check_isoperimetric_sandwich(0.1, 0.4, (0.5, 0.99)).verdict == "Inconclusive"
    with pytest.raises(ValueError):
        am.check_isoperimetric_sandwich(0.1, 0.4, (0.9, 0.8))
    with pytest.raises(ValueError):
        am.check_isoperimetric_sandwich(0.1, 0.4, est, tags=("a", "b"))


def test_brw_without_branching_is_a_walk():
    t = tm.build_tree(tm.spec("regular", 10, d=3))
    s = am.run_brw(t, 0.0, 20, 20_000, seed=1)
    want = potential.expected_root_visits(t, 20)
    se = s.root_visits.std(ddof=1) / math.sqrt(20_000)
    assert abs(s.root_visits.mean() - want) < 4 * se
    assert s.peak.max() == 1


def test_lumped_brw_matches_explicit():
    t = tm.build_tree(tm.spec("regular", 9, d=3))
    a = am.run_brw(t, 0.3, 15, 4000, seed=2)
    b = am.run_brw_levels(potential.LevelProfile.of_tree(t), 0.3, 15, 4000, seed=3)
    se = math.sqrt(a.root_visits.var() / 4000 + b.root_visits.var() / 4000)
    assert abs(a.root_visits.mean() - b.root_visits.mean()) < 4 * se


def test_brw_dominates_frog():
    t = tm.build_tree(tm.spec("regular", 8, d=3))
    b = am.run_brw(t, 0.2, 25, 2000, seed=1)
    f = frog.run_frog(t, frog.FrogConfig(0.2, horizon=25, trials=2000, seed=2))
    assert frog.dominance_test(b.root_visits, f.returns).verdict == "Pass"


def test_brw_population_cap():
    t = tm.build_tree(tm.spec("regular", 8, d=3))
    s = am.run_brw(t, 3.0, 30, 10, seed=1, max_population=200)
    assert s.aborted.all()
    with pytest.raises(ValueError):
        am.run_brw(t, np.ones(3), 10, 10, seed=1)


def test_decay_fit_recovers_rate():
    rng = np.random.default_rng(0)
    times = np.arange(1, 61)
    arrivals = np.zeros((5000, 61), np.int64)
    arrivals[:, 1:] = rng.poisson(2.0 * 0.95 ** times, size=(5000, 60))
    fit = am.fit_arrival_decay(arrivals, times, boot=200)
    assert fit.ci_low < 0.95 < fit.ci_high
    assert fit.decaying


def test_csv_writers(tmp_path):
    t = tm.build_tree(tm.spec("regular", 5, d=3))
    am.write_expansion_csv([am.enumerate_edge_expansion(t, 4)], tmp_path / "e.csv", "# h\n")
    am.write_brw_csv(am.run_brw(t, 0.1, 5, 3, seed=0), tmp_path / "b.csv", "# h\n")
    assert (tmp_path / "e.csv").read_text().startswith("# h\n")
    assert len((tmp_path / "b.csv").read_text().splitlines()) == 5
