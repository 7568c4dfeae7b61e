import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from froglab import tree as tm, walks
from froglab.rng import RngStream


@pytest.fixture(scope="module")
def wt():
    return tm.random_tw_tree(3, 4, 2, 8, 7)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(0, 6), min_size=1, max_size=60))
def test_loop_erase_properties(seq):
    out = walks.loop_erase(seq).vertices
    assert out[0] == seq[0] and out[-1] == seq[-1]
    assert len(set(out)) == len(out)
    # what survives keeps its chronological order
    pos = [max(i for i, x in enumerate(seq) if x == v) for v in out]
    assert pos == sorted(pos)


def test_loop_erase_example():
    assert walks.loop_erase([0, 1, 2, 1, 3, 4, 3, 1, 5]).vertices == (0, 1, 5)
    with pytest.raises(ValueError):
        walks.loop_erase([])


def test_srw_path_is_a_walk(wt):
    p = walks.srw_path(wt, 5, absorbers=[0], horizon=500, rng=RngStream.derive(3))
    assert p.kind is walks.PathKind.RAW
    for a, b in zip(p.vertices, p.vertices[1:]):
        assert b in wt.neighbors(a)
    if p.terminal is walks.Terminal.HIT_ABSORBER:
        assert p.vertices[-1] == 0
    erased = walks.loop_erase(p)
    assert erased.kind is walks.PathKind.LOOP_ERASED
    with pytest.raises(ValueError):
        walks.loop_erase(erased)


def test_first_step_two_formulas_agree(wt):
    for v in [0, 1, 2] + list(wt.level(2))[:6]:
        law = walks.lerw_first_step(wt, v)
        assert law.prob.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.allclose(law.prob, walks.markov_step(wt, v), rtol=1e-10)
        assert np.all(law.lower <= law.prob + 1e-12) and np.all(law.prob <= law.upper + 1e-12)


def test_next_step_two_formulas_agree(wt):
    for v in list(wt.level(2))[:6]:
        for w in wt.neighbors(v):
            law = walks.lerw_next_step(wt, v, w)
            assert law.prob[wt.neighbors(v).index(w)] == 0
            assert law.prob.sum() == pytest.approx(1.0, abs=1e-12)
            assert np.allclose(law.prob, walks.markov_step(wt, v, came_from=w), rtol=1e-10)


def test_first_step_matches_erased_walks(wt):
    v = wt.level(2).start + 1
    law = walks.lerw_first_step(wt, v)
    rows = walks.erased_prefixes(wt, v, 1, 100_000, seed=2)
    nb = wt.neighbors(v)
    freq = np.array([(rows[:, 1] == w).mean() for w in nb])
    sigma = np.sqrt(law.prob * (1 - law.prob) / len(rows))
    assert np.all(np.abs(freq - law.prob) < 4 * sigma)


def test_step_law_errors(wt):
    with pytest.raises(tm.TreeError):
        walks.lerw_first_step(wt, wt.n - 1)
    with pytest.raises(tm.TreeError):
        walks.lerw_next_step(wt, 5, 0)


def test_markov_sampler_paths(wt):
    p = walks.sample_lerw_markov(wt, wt.level(3).start, rng=RngStream.derive(1))
    assert len(set(p.vertices)) == len(p.vertices)
    assert p.terminal in (walks.Terminal.HIT_ABSORBER, walks.Terminal.ESCAPED)
    assert walks.sample_lerw_markov(wt, 0).vertices == (0,)


def test_exact_prefix_law_is_normalized(wt):
    law = walks.exact_prefix_law(wt, wt.level(2).start, 4)
    assert sum(law.values()) == pytest.approx(1.0, abs=1e-12)


def test_xval_small(wt):
    rep = walks.lerw_xval(wt, wt.level(2).start, 3, 20_000, seed=4)
    assert rep.passed, rep


@pytest.mark.parametrize("seed", range(5))
def test_transition_bounds_random_trees(seed):
    rep = walks.verify_transition_bounds(tm.random_tw_tree(3, 6, 3, 8, seed), params=(3, 6, 3))
    assert not rep.violations
    lo1, hi1, lo2 = rep.bounds
    assert lo1 <= rep.first_min and rep.first_max <= hi1 and rep.next_min >= lo2


def test_transition_bounds_detect_breakage():
    # one heavy edge at the root, checked against bounds for r = 1
    t = tm.build_tree(tm.spec("regular", 8, d=3))
    res = t.resistance.copy()
    res[1] = 50.0
    rep = walks.verify_transition_bounds(t.with_resistance(res), params=(3, 3, 1))
    assert any("first-step mass at vertex 0 toward 1" in v for v in rep.violations)
