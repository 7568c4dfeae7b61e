import math
from dataclasses import replace

import numpy as np
import pytest

from froglab import frog, potential, tree as tm
from froglab.kernels import EV_ELIM_TIE, EV_MOVE


def reference_standard_frog(t, lam, horizon, trials, seed):
    """Direct simulation of the standard model with numpy's generator (unit resistances)."""
    rng = np.random.default_rng(seed)
    nbrs = [t.neighbors(v) for v in range(t.n)]
    cutoff = t.leaf_mode == tm.CONTINUES
    out = np.zeros(trials, np.int64)
    for k in range(trials):
        visited = np.zeros(t.n, bool)
        visited[0] = True
        awake = [0]
        for _ in range(horizon):
            if not awake:
                break
            nxt = []
            woken = []
            for v in awake:
                w = nbrs[v][rng.integers(len(nbrs[v]))]
                if w == 0:
                    out[k] += 1
                if not visited[w]:
                    visited[w] = True
                    if not cutoff[w]:
                        woken += [w] * rng.poisson(lam)
                if not cutoff[w]:
                    nxt.append(w)
            awake = nxt + woken
    return out


@pytest.fixture(scope="module")
def small():
    return tm.build_tree(tm.spec("regular", 5, d=3))


def test_config_validation():
    for bad in (dict(lam=-1), dict(lam=1, horizon=0), dict(lam=1, trials=0),
                dict(lam=1, seed=-1), dict(lam=1, lambda_o=-2)):
        with pytest.raises(ValueError):
            frog.FrogConfig(**bad)
    with pytest.raises(ValueError):
        frog.FrogConfig(1.0, model="lazy")


def test_sleeper_placement(small):
    std = frog.sleeper_means(small, frog.FrogConfig(2.0))
    assert std[0] == 0 and std[1] == 2.0
    assert np.all(std[small.leaf_mode == tm.CONTINUES] == 0)
    tr = frog.FrogConfig(0.5, "truncated")
    assert tr.sleeper_mean(small) == 2 * 3 * 1 * 0.5
    assert frog.FrogConfig(0.5, "truncated", lambda_o=1.0).sleeper_mean(small) == 1.0
    piped = tm.decorate(small, pipe_lengths=1)
    bp = frog.sleeper_means(piped, frog.FrogConfig(1.0, placement="branch_points"))
    deg = piped.n_children + (np.arange(piped.n) > 0)
    assert np.all(bp[deg == 2] == 0)
    assert np.all(bp[(deg >= 3) & (np.arange(piped.n) > 0)] == 1.0)


def test_standard_matches_reference_simulator(small):
    ours = frog.run_frog(small, frog.FrogConfig(1.0, horizon=12, trials=6000, seed=1)).returns
    ref = reference_standard_frog(small, 1.0, 12, 6000, seed=2)
    se = math.sqrt(ours.var(ddof=1) / len(ours) + ref.var(ddof=1) / len(ref))
    assert abs(ours.mean() - ref.mean()) < 4 * se


def test_single_walker_matches_dp():
    t = tm.build_tree(tm.spec("regular", 10, d=3))
    run = frog.run_frog(t, frog.FrogConfig(0.0, horizon=20, trials=20_000, seed=5))
    want = potential.expected_root_visits(t, 20)
    se = run.returns.std(ddof=1) / math.sqrt(len(run))
    assert abs(run.returns.mean() - want) < 4 * se


def test_determinism_and_workers(small):
    cfg = frog.FrogConfig(1.0, horizon=15, trials=64, seed=3)
    a = frog.run_frog(small, cfg, watch="all", steps=True)
    b = frog.run_frog(small, cfg, watch="all", steps=True, workers=3)
    c = frog.run_frog(small, replace(cfg, seed=4), watch="all", steps=True)
    assert a.digest() == b.digest()
    assert a.digest() != c.digest()


@pytest.mark.parametrize("model", ["standard", "truncated"])
def test_conservation(small, model):
    run = frog.run_frog(small, frog.FrogConfig(1.0, model, horizon=30, trials=300, seed=2))
    assert frog.check_conservation(run) == []
    c = run.counters
    assert np.array_equal(c[:, 0], 1 + c[:, 1])
    if model == "truncated":
        assert np.array_equal(run.returns, c[:, 4])
        assert c[:, 2:4].sum() > 0


def test_conservation_detects_tampering(small):
    run = frog.run_frog(small, frog.FrogConfig(1.0, horizon=10, trials=5, seed=2))
    c = run.counters.copy()
    c[2, 1] += 1
    assert frog.check_conservation(replace(run, counters=c))


def test_resolve_tie():
    assert frog.resolve_tie([0.2, 0.9, 0.9], [5, 7, 6]) == 2
    assert frog.resolve_tie([0.5], [1]) == 0


def test_audit_and_fault_injection(small):
    cfg = frog.FrogConfig(0.5, "truncated", horizon=30, trials=150, seed=9)
    rep = frog.audit_truncated(small, cfg, chunk=50)
    assert rep.ok and rep.digest == rep.replay_digest
    run = frog.run_frog(small, cfg, log=True)
    log = run.log.copy()
    i = np.flatnonzero((log["code"] == EV_MOVE) & (log["vertex"] > 0))[0]
    log["code"][i] = EV_ELIM_TIE
    assert frog.check_tie_breaks(replace(run, log=log))
    assert frog.check_connectivity(run, small) == []
    with pytest.raises(ValueError):
        frog.audit_truncated(small, replace(cfg, model="standard"))


def test_truncated_needs_tw_tree():
    t = tm.build_tree(tm.spec("kary", 5, k=2))
    with pytest.raises(tm.TreeError):
        frog.run_frog(t, frog.FrogConfig(1.0, "truncated"))


def test_outcome_view(small):
    run = frog.run_frog(small, frog.FrogConfig(1.0, horizon=10, trials=3, seed=1),
                        watch=[0, 1, 2], log=True)
    o = run.outcome(1)
    assert o.returns_to_root == run.returns[1]
    assert o.activated[0]
    assert o.counters["ever_active"] == run.counters[1, 0]
    assert np.all(o.log["trial"] == run.trials[1])
    assert len(o.to_bytes()) > 0
    with pytest.raises(ValueError):
        run.watched([5])


def test_level_mass_and_monotonicity():
    t = tm.build_tree(tm.spec("regular", 9, d=3))
    v = t.level(1).start
    run = frog.run_frog(t, frog.FrogConfig(2.0, horizon=40, trials=200, seed=6),
                        watch=frog.level_watch(t, v, 4))
    m = frog.ancestor_closed_mass(run, t, v, 4)
    assert m.shape == (200, 5)
    assert np.all(np.diff(m, axis=1) <= 1e-12)
    assert np.allclose(m[:, 4], frog.measure_level_mass(run, t, v, 4))
    one = frog.ancestor_closed_mass(run.outcome(0), t, v, 4)
    assert np.allclose(one, m[0])


def test_count_v_needs_log(small):
    cfg = frog.FrogConfig(1.0, "truncated", horizon=20, trials=40, seed=1)
    with pytest.raises(ValueError):
        frog.count_V(frog.run_frog(small, cfg), small, 4)
    run = frog.run_frog(small, cfg, log=True)
    counts = frog.count_V(run, small, 4)
    assert counts.shape == (40,) and counts.min() >= 0


def test_dominance():
    t = tm.build_tree(tm.spec("regular", 7, d=3))
    a = frog.run_frog(t, frog.FrogConfig(1.0, horizon=25, trials=1000, seed=1))
    b = frog.run_frog(t, frog.FrogConfig(1.0, "truncated", horizon=25, trials=1000, seed=2,
                                         lambda_o=1.0))
    res = frog.dominance_test(a, b)
    assert res.verdict == "Pass"
    assert res.band == pytest.approx(frog.dkw_band(1000, 1000, 0.001))
    assert frog.dominance_test(b.returns, a.returns).verdict == "Fail"
    with pytest.raises(ValueError, match="not matched"):
        frog.dominance_test(a, frog.run_frog(t, frog.FrogConfig(1.0, "truncated", horizon=25,
                                                                 trials=1000)))
    assert frog.dominance_test(a.returns[:50], b.returns[:50]).verdict == "Inconclusive"


def test_wilson_interval():
    lo, hi = frog.wilson_interval(50, 100)
    assert lo < 0.5 < hi and hi - lo == pytest.approx(0.192, abs=0.002)
    assert frog.wilson_interval(0, 0) == (0.0, 1.0)


def test_conditional_prefilter_is_exact(small):
    cfg = frog.FrogConfig(0.5, "truncated", horizon=40, seed=4)
    u = small.level(2).start
    ids = np.arange(3000)
    first = frog.root_first_steps(small, cfg, ids)
    run = frog.run_frog(small, cfg, watch=[small.parent[u]], trials=ids)
    # the parent on level 1 is active exactly when the root particle steps there first
    assert np.array_equal(first == small.parent[u], run.watch_time[:, 0] >= 0)
    a = frog.estimate_conditional_activation(small, cfg, u, accepted=500)
    b = frog.estimate_conditional_activation(small, cfg, u, accepted=500, prefilter=False)
    assert (a.estimate, a.accepted) == (b.estimate, b.accepted)
    assert a.estimate >= 1 - math.exp(-0.5)


def test_conditional_inconclusive(small):
    e = frog.estimate_conditional_activation(small, frog.FrogConfig(0.5, "truncated", seed=1),
                                             small.level(2).start, trials=1)
    assert e.inconclusive or e.accepted == 1
    with pytest.raises(ValueError):
        frog.estimate_conditional_activation(small, frog.FrogConfig(0.5), 1)


def test_recurrence_diagnostics(small):
    d = frog.recurrence_diagnostics(small, frog.FrogConfig(1.0, "truncated", seed=0), alpha=8.0,
                                    trials=200)
    assert d.beta == pytest.approx(1 / 3)
    assert d.n_choice == math.floor(math.exp(2))


def test_event_log_round_trip(small, tmp_path):
    run = frog.run_frog(small, frog.FrogConfig(0.5, "truncated", horizon=15, trials=4, seed=1),
                        log=True)
    n = frog.write_event_log(run, small, tmp_path / "ev.bin")
    back = frog.read_event_log(tmp_path / "ev.bin")
    assert [t for t, _ in back] == list(run.trials)
    assert sum(len(r) for _, r in back) + len(back) == n
    assert np.array_equal(back[0][1]["step"], run.log[run.log["trial"] == 0]["step"])
    (tmp_path / "bad.bin").write_bytes(b"\x00" * 5)
    with pytest.raises(ValueError):
        frog.read_event_log(tmp_path / "bad.bin")


def test_outcome_csv(small, tmp_path):
    run = frog.run_frog(small, frog.FrogConfig(1.0, horizon=10, trials=3, seed=1))
    frog.write_outcome_csv(run, tmp_path / "o.csv", header="# x\n")
    lines = (tmp_path / "o.csv").read_text().splitlines()
    assert lines[1].startswith("trial_id") and len(lines) == 5


def test_particle_budget_abort(small):
    run = frog.run_frog(small, frog.FrogConfig(20.0, horizon=30, trials=5, seed=1,
                                               max_particles=50))
    assert run.aborted.all()
    assert np.all(run.counters[:, 0] <= 50)


def test_identical_samples_pass(small):
    run = frog.run_frog(small, frog.FrogConfig(1.0, horizon=20, trials=300, seed=1))
    res = frog.dominance_test(run, run)
    assert res.verdict == "Pass" and res.statistic == 0


def test_tie_winner_ignores_labels():
    rng = np.random.default_rng(0)
    for _ in range(50):
        marks = rng.random(5)
        pids = rng.permutation(100)[:5]
        win = pids[frog.resolve_tie(marks, pids)]
        perm = rng.permutation(5)
        assert pids[perm][frog.resolve_tie(marks[perm], pids[perm])] == win


def test_count_v_zero_without_sleepers(small):
    run = frog.run_frog(small, frog.FrogConfig(0.0, "truncated", horizon=30, trials=200, seed=1),
                        log=True)
    assert not frog.count_V(run, small, 1).any()


def test_count_v_grows_with_depth():
    ns, means = range(2, 9), []
    for n in ns:
        t = tm.build_tree(tm.spec("regular", n + 1, d=3))
        v = t.level(1).start
        cfg = frog.FrogConfig(2.0, "truncated", horizon=60, trials=2000, seed=n, lambda_o=2.0)
        run = frog.run_frog(t, cfg, watch=[v], log=True)
        on = run.watch_time[:, 0] >= 0
        means.append(frog.count_V(run, t, v)[on].mean())
    slope = np.polyfit(list(ns), means, 1)[0]
    assert slope > 0
    assert means[-1] > means[0]


def test_level_mass_chains_activation_estimate():
    t = tm.build_tree(tm.spec("regular", 12, d=3))
    v = t.level(1).start
    cfg = frog.FrogConfig(2.0, "truncated", horizon=40, trials=1500, seed=3, lambda_o=2.0)
    run = frog.run_frog(t, cfg, watch=frog.level_watch(t, v, 3))
    on = run.watch_time[:, run.watched([v])[0]] >= 0
    mass = frog.measure_level_mass(run, t, v, 3, margin=8)[on]
    # one conditional step per level along the leftmost path below v
    p = math.prod(frog.estimate_conditional_activation(t, cfg, t.level(k).start,
                                                       accepted=2000).estimate
                  for k in (2, 3, 4))
    sigma = mass.std(ddof=1) / math.sqrt(len(mass))
    assert mass.mean() >= p - 3 * sigma
