"""The compiled and pure-Python kernels must agree bit for bit."""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from froglab import amenability as am, frog, kernels, rng, tree as tm, walks
from froglab.kernels import python_backend

needs_compiled = pytest.mark.skipif(kernels.compiled_backend is None,
                                    reason="compiled kernels not built")
NAMES = ("frog_batch", "brw_batch", "erased_prefix_batch", "lerw_markov_batch")


@pytest.fixture
def pure(monkeypatch):
    def use_python():
        for name in NAMES:
            monkeypatch.setattr(kernels, name, getattr(python_backend, name))
    return use_python


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2**64 - 1), trial=st.integers(0, 2**40), a=st.integers(0, 2**40),
       i=st.integers(0, 2**32))
def test_scalar_and_array_rng_agree(seed, trial, a, i):
    k = kernels.stream_key(seed, trial, a, 3, kernels.ROLE_WALK)
    assert int(rng.stream_key_array(seed, trial, a, 3, kernels.ROLE_WALK)) == k
    u = kernels.uniform(k, i)
    assert 0.0 <= u < 1.0
    assert rng.uniform_keys(np.uint64(k), i) == u


@needs_compiled
@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**64 - 1), i=st.integers(0, 2**32),
       mean=st.floats(0, 50, allow_nan=False))
def test_compiled_rng_matches_python(seed, i, mean):
    c = kernels.compiled_backend
    k = python_backend.stream_key(seed, 1, 2, 3, 4)
    assert c.py_stream_key(seed, 1, 2, 3, 4) == k
    u = python_backend.uniform(k, i)
    assert c.py_uniform(k, i) == u
    assert c.py_poisson(mean, u) == python_backend.poisson(mean, u)


def test_poisson_inversion_law():
    us = rng.uniform_array(kernels.stream_key(5, 0, 0, 0, 0), 0, 50_000)
    draws = np.array([kernels.poisson(2.5, u) for u in us])
    assert abs(draws.mean() - 2.5) < 0.05
    assert abs(draws.var() - 2.5) < 0.1


def test_rng_stream_counter():
    s = rng.RngStream.derive(9, trial=2, vertex=3)
    a = [s.uniform() for _ in range(3)]
    s2 = rng.RngStream.derive(9, trial=2, vertex=3)
    assert np.array_equal(s2.uniforms(3), a)
    assert s.counter == 3


@needs_compiled
@pytest.mark.parametrize("model, lam", [("standard", 1.0), ("truncated", 0.5)])
def test_frog_backends_identical(pure, model, lam):
    t = tm.build_tree(tm.spec("regular", 6, d=3))
    cfg = frog.FrogConfig(lam, model, horizon=25, trials=40, seed=3)
    kw = dict(watch="all", log=True, steps=True)
    fast = frog.run_frog(t, cfg, **kw)
    pure()
    slow = frog.run_frog(t, cfg, **kw)
    assert fast.digest() == slow.digest()
    assert np.array_equal(fast.log, slow.log)


@needs_compiled
def test_brw_backends_identical(pure):
    t = tm.build_tree(tm.spec("regular", 6, d=3))
    a = am.run_brw(t, 0.3, 20, 50, seed=4, steps=True)
    pure()
    b = am.run_brw(t, 0.3, 20, 50, seed=4, steps=True)
    assert np.array_equal(a.root_visits, b.root_visits)
    assert np.array_equal(a.arrivals, b.arrivals)
    assert np.array_equal(a.peak, b.peak)


@needs_compiled
def test_walk_backends_identical(pure):
    t = tm.random_tw_tree(3, 4, 2, 7, 2)
    s = t.level(2).start
    a = walks.markov_prefixes(t, s, 4, 2000, 1), walks.erased_prefixes(t, s, 4, 500, 1)
    pure()
    b = walks.markov_prefixes(t, s, 4, 2000, 1), walks.erased_prefixes(t, s, 4, 500, 1)
    assert np.array_equal(a[0], b[0])
    assert np.array_equal(a[1], b[1])


def test_trial_ids_select_streams(reg3_8):
    cfg = frog.FrogConfig(1.0, horizon=20, trials=30, seed=8)
    whole = frog.run_frog(reg3_8, cfg)
    part = frog.run_frog(reg3_8, cfg, trials=np.array([29, 4, 17]))
    assert np.array_equal(part.returns, whole.returns[[29, 4, 17]])
