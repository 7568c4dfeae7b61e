import math

import numpy as np
import pytest

from froglab import potential as pt, tree as tm


def laplacian(t):
    L = np.zeros((t.n, t.n))
    for v in range(1, t.n):
        c = 1.0 / t.resistance[v]
        p = t.parent[v]
        L[v, v] += c
        L[p, p] += c
        L[v, p] -= c
        L[p, v] -= c
    return L


def dense_resistance(t, v):
    """Resistance from v to the set of cutoff leaves, by a Dirichlet solve."""
    L = laplacian(t)
    ground = t.leaf_mode == tm.CONTINUES
    free = np.flatnonzero(~ground)
    b = np.zeros(len(free))
    b[np.searchsorted(free, v)] = 1.0
    phi = np.linalg.solve(L[np.ix_(free, free)], b)
    return phi[np.searchsorted(free, v)]


def dense_hit(t, a, b):
    """P(conductance walk from a hits b before a cutoff leaf)."""
    L = laplacian(t)
    fixed = (t.leaf_mode == tm.CONTINUES) | (np.arange(t.n) == b)
    free = np.flatnonzero(~fixed)
    rhs = -L[np.ix_(free, [b])].ravel()
    h = np.linalg.solve(L[np.ix_(free, free)], rhs)
    return h[np.searchsorted(free, a)]


@pytest.fixture(scope="module")
def small():
    return tm.random_tw_tree(3, 5, 3, 5, 21)


def test_resistance_matches_dense_solve(small):
    for v in (0, 1, small.level(2).start + 3):
        b = pt.resistance_to_infinity(small, v)
        assert b.lower == pytest.approx(dense_resistance(small, v), rel=1e-10)
        assert b.lower <= b.upper


def test_hitting_matches_dense_solve(small):
    a = small.level(4).start + 2
    for b in (0, small.parent[a], small.level(3).stop - 1):
        pb = pt.hitting_probability(small, a, b)
        assert pb.value == pytest.approx(dense_hit(small, a, b), rel=1e-10)
        assert pb.lower <= pb.upper


def test_regular_closed_forms():
    t = tm.build_tree(tm.spec("regular", 16, d=3))
    assert pt.branch_resistance(t, 0, 1).contains(2.0)
    assert pt.resistance_to_infinity(t, 0).contains(2 / 3)
    assert pt.hitting_probability(t, 1, 0).contains(0.5, tol=1e-4)


@pytest.mark.parametrize("D, r", [(3, 1), (3, 2), (4, 1), (5, 3)])
def test_profile_brackets(D, r):
    b = pt.LevelProfile.regular(D, 30, r).branch_resistance(1)
    want = r * (D - 2 + 1) / (D - 2)
    assert b.lower <= want <= b.upper
    assert b.width < 1e-6


def test_profile_agrees_with_tree():
    t = tm.build_tree(tm.spec("regular", 9, d=3))
    prof = pt.LevelProfile.of_tree(t)
    assert prof == pt.LevelProfile.regular(3, 9)
    assert np.allclose(pt.root_occupation(t, 30), pt.root_occupation(prof, 30), atol=1e-14)
    with pytest.raises(tm.TreeError):
        pt.LevelProfile.of_tree(tm.random_tw_tree(3, 5, 1, 4, 0))


def test_root_occupation_matches_matrix_power(small):
    P = np.zeros((small.n, small.n))
    for v in range(small.n):
        if small.leaf_mode[v] == tm.CONTINUES:
            continue
        nb = small.neighbors(v)
        c = np.array([1.0 / small.edge_resistance(v, w) for w in nb])
        P[v, nb] = c / c.sum()
    x = np.zeros(small.n)
    x[0] = 1
    want = [1.0]
    for _ in range(12):
        x = x @ P
        want.append(x[0])
    assert np.allclose(pt.root_occupation(small, 12), want, atol=1e-14)


def test_spectral_radius_regular():
    est = pt.return_probability_sequence(pt.LevelProfile.regular(3, 400), 200)
    rho = 2 * math.sqrt(2) / 3
    lo, hi = est.bracket
    assert lo <= rho <= hi
    assert abs(est.rho_estimate - rho) < 0.005
    with pytest.raises(pt.BracketTooWide):
        pt.return_probability_sequence(pt.LevelProfile.regular(3, 50), 200)


@pytest.mark.parametrize("n", range(3, 9))
def test_binary_harmonic_uniform(n):
    t = tm.build_tree(tm.spec("kary", n + 10, k=2))
    hm = pt.harmonic_measure(t, 0, n)
    assert np.max(np.abs(hm.mass - 2.0**-n)) <= 1e-12


def test_harmonic_dual_factorization(small):
    t = tm.random_tw_tree(3, 4, 2, 13, 5)
    v = t.level(2).start
    hm = pt.harmonic_measure(t, v, 2, margin=8)
    assert np.allclose(pt.harmonic_measure_dual(t, v, 2, margin=8), hm.mass, rtol=1e-10)
    assert abs(hm.mass.sum() - 1) < 1e-12
    assert np.all(hm.lower <= hm.mass + 1e-15) and np.all(hm.mass <= hm.upper + 1e-15)


def test_harmonic_margin_enforced(small):
    with pytest.raises(pt.BracketTooWide):
        pt.harmonic_measure(small, 0, 3)


def test_p0_two_ways():
    t = tm.random_tw_tree(3, 4, 2, 14, 8)
    v = t.level(2).start + 1
    us = np.array(t.descendants_at(v, 2))
    a = pt.p0_probability(t, us, v)
    b = np.array([pt.p0_via_root(t, int(u)) for u in us])
    assert np.allclose(a, b, rtol=1e-10)


def test_harm_return_floor_certified():
    t = tm.build_tree(tm.spec("regular", 16, d=3))
    rep = pt.verify_harm_return_comparison(t, t.level(2).start, 2)
    assert rep.certified
    assert rep.floor == pytest.approx(pt.harm_return_floor(3, 3, 1.0))
    with pytest.raises(ValueError):
        pt.verify_harm_return_comparison(t, 1, 2)


def test_cutoff_query_rejected(small):
    with pytest.raises(tm.TreeError):
        pt.resistance_to_infinity(small, small.n - 1)
