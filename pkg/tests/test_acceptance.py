"""Acceptance criteria, each at its stated tolerance and size.

Every test records one PASS/FAIL line (see the terminal summary).
"""
import math
import time
from fractions import Fraction

import numpy as np
import pytest

from froglab import amenability as am, frog, potential, tree as tm, walks
from froglab.explab import load_config, run_experiment

pytestmark = pytest.mark.slow


def test_c01_transition_bounds(criterion):
    t0 = time.perf_counter()
    violations = uncertified = triples = 0
    worst = [1.0, 0.0, 1.0]
    for seed in range(100):
        rep = walks.verify_transition_bounds(tm.random_tw_tree(3, 6, 3, 8, seed), params=(3, 6, 3))
        violations += len(rep.violations)
        uncertified += rep.uncertified
        triples += rep.triples
        worst = [min(worst[0], rep.first_min), max(worst[1], rep.first_max),
                 min(worst[2], rep.next_min)]
    dt = time.perf_counter() - t0
    lo1, hi1, lo2 = walks.transition_bounds(3, 6, 3)
    ok = violations == 0 and dt < 120
    criterion(1, "LERW transition bounds", ok,
              f"100 trees, {triples} triples, {violations} violations, {uncertified} uncertified; "
              f"first-step range [{worst[0]:.4f}, {worst[1]:.4f}] in [{lo1:.4f}, {hi1:.4f}], "
              f"conditional min {worst[2]:.4f} >= {lo2:.4f}; {dt:.1f} s")
    assert ok


def test_c02_sampler_equivalence(criterion):
    t0 = time.perf_counter()
    t = tm.random_tw_tree(3, 4, 2, 8, 7)
    rep = walks.lerw_xval(t, t.level(2).start, steps=4, nsamples=10**6, seed=0)
    dt = time.perf_counter() - t0
    ok = rep.passed and dt < 300
    criterion(2, "Markov LERW vs erased SRW", ok,
              f"TV {rep.tv_between:.5f} vs 3-sigma band {rep.band:.5f} at 10^6 samples each; "
              f"{dt:.1f} s")
    assert ok


def test_c03_resistance_closed_forms(criterion):
    t0 = time.perf_counter()
    parts, ok = [], True
    for D, d, r in ((3, 3, 1), (3, 3, 2), (4, 4, 1)):
        b = potential.LevelProfile.regular(d, 30, r).branch_resistance(1)
        want = r * (d - 1) / (d - 2)
        floor = (D - 1) / (D - 2)
        good = b.contains(want) and b.width < 1e-6 and floor <= b.upper
        ok &= good
        parts.append(f"({D},{d},{r}): [{b.lower:.9f}, {b.upper:.9f}] ∋ {want:g}")
    dt = time.perf_counter() - t0
    ok &= dt < 1
    criterion(3, "resistance closed forms", ok, "; ".join(parts) + f"; {dt * 1000:.0f} ms")
    assert ok


def test_c04_harmonic_measure(criterion):
    worst = 0.0
    for n in range(3, 9):
        hm = potential.harmonic_measure(tm.build_tree(tm.spec("kary", n + 10, k=2)), 0, n)
        worst = max(worst, float(np.max(np.abs(hm.mass - 2.0**-n))))
    t = tm.random_tw_tree(3, 4, 2, 13, 3)
    hm = potential.harmonic_measure(t, 0, 3)
    rows = walks.erased_prefixes(t, 0, 3, 10**6, seed=1)
    freq = np.bincount(rows[:, 3] - hm.vertices[0], minlength=len(hm.vertices)) / 1e6
    z = np.abs(freq - hm.mass) / np.sqrt(hm.mass * (1 - hm.mass) / 1e6)
    ok = worst <= 1e-12 and z.max() <= 3
    criterion(4, "harmonic measure", ok,
              f"binary n=3..8 max error {worst:.1e}; weighted tree level 3 ({len(z)} vertices) "
              f"max |z| {z.max():.2f} at 10^6 LERW samples")
    assert ok


def test_c05_activation_floor(criterion):
    trees = [tm.build_tree(tm.spec("regular", 5, d=3)), tm.random_tw_tree(3, 6, 3, 4, 0)]
    parts, ok = [], True
    for t in trees:
        for lam in (0.5, 1.0, 2.0):
            cfg = frog.FrogConfig(lam, "truncated", horizon=60, seed=1)
            e = frog.estimate_conditional_activation(t, cfg, t.level(2).start, accepted=10**5)
            floor = 1 - math.exp(-lam)
            good = e.accepted == 10**5 and e.estimate >= floor - 3 * e.sigma
            ok &= good
            parts.append(f"{t.tag.split('(')[0]} lambda={lam:g} lambda_o={e.sleeper_mean:g}: "
                         f"{e.estimate:.4f} vs {floor:.4f}")
    criterion(5, "conditional activation floor", ok, "; ".join(parts))
    assert ok


def test_c06_dominance(criterion):
    t = tm.build_tree(tm.spec("regular", 10, d=3))
    std = frog.run_frog(t, frog.FrogConfig(1.0, horizon=40, trials=10**4, seed=1))
    tr = frog.run_frog(t, frog.FrogConfig(1.0, "truncated", horizon=40, trials=10**4, seed=2,
                                          lambda_o=1.0))
    res = frog.dominance_test(std, tr)
    ok = res.verdict == "Pass"
    criterion(6, "standard dominates truncated", ok,
              f"sup(F_std - F_trunc) = {res.statistic:.4f} <= band {res.band:.4f}; "
              f"means {std.returns.mean():.3f} vs {tr.returns.mean():.3f}")
    assert ok


def test_c07_star_tree_expansion(criterion):
    parts, ok = [], True
    for L in (1, 2, 6):
        rep = am.enumerate_edge_expansion(tm.random_star_tree(L, 6, seed=L), 12, L=L)
        ok &= bool(rep.satisfies_analytic)
        parts.append(f"L={L}: {rep.ratio} >= {rep.phi_lower_analytic}")
    criterion(7, "expansion of star trees", ok, "; ".join(parts))
    assert ok


def test_c08_isoperimetric_sandwich(criterion):
    est = potential.return_probability_sequence(potential.LevelProfile.regular(3, 200), 200)
    rho = 2 * math.sqrt(2) / 3
    phi = am.enumerate_edge_expansion(tm.build_tree(tm.spec("regular", 12, d=3)), 10)
    rep = am.check_isoperimetric_sandwich(am.tree_iso_bound(1), phi, est)
    ok = (abs(est.rho_estimate - rho) <= 0.005 and phi.ratio == Fraction(2, 5)
          and rep.verdict == "Pass")
    criterion(8, "isoperimetric sandwich", ok,
              f"rho in [{est.rho_lower:.4f}, {est.rho_upper:.4f}] (fit {est.rho_estimate:.4f}); "
              f"{rep.lower_side:.5f} <= {rep.gap_low:.4f}, {rep.gap_high:.4f} <= {rep.upper_side}")
    assert ok


def test_c09_threshold_arithmetic(criterion):
    th = am.transience_threshold(Fraction(1, 3))
    ok = th == Fraction(1, 17) and isinstance(th, Fraction)
    ok &= all(am.corollary_bound(L) <= am.transience_threshold(am.tree_iso_bound(L))
              for L in range(1, 11))
    criterion(9, "threshold arithmetic", ok,
              f"threshold(1/3) = {th}; corollary bound below threshold for L = 1..10")
    assert ok


def test_c10_phase_regimes(criterion, tmp_path):
    t = tm.build_tree(tm.spec("regular", 20, d=3))
    run = frog.run_frog(t, frog.FrogConfig(0.05, horizon=200, trials=10**4, seed=3), steps=True)
    fit = am.fit_arrival_decay(run.arrivals, np.arange(20, 201, 2), boot=400, seed=0)
    cfg = tmp_path / "recurrent.cfg"
    cfg.write_text("tree = regular(d=3)@8\nmodel = standard\nlambda_grid = 5\n"
                   "depth_grid = 8, 9, 10, 11, 12, 13, 14\nhorizon_grid = 60\ntrials = 400\n"
                   "seed = 5\noutputs = out\n")
    v = run_experiment(load_config(cfg)).verdict(5.0)
    ok = fit.ratio < 1 and fit.ci_high < 1 and v.verdict == "Recurrent-leaning"
    criterion(10, "transient decay and recurrent verdict", ok,
              f"lambda=0.05 per-step ratio {fit.ratio:.4f} CI [{fit.ci_low:.4f}, "
              f"{fit.ci_high:.4f}]; lambda=5 slope {v.slope:.4f} CI [{v.ci_low:.4f}, "
              f"{v.ci_high:.4f}] -> {v.verdict}")
    assert ok


def test_c11_audit(criterion):
    t = tm.build_tree(tm.spec("regular", 8, d=3))
    cfg = frog.FrogConfig(0.5, "truncated", horizon=40, trials=10**4, seed=1)
    rep = frog.audit_truncated(t, cfg)
    problems = len(rep.conservation) + len(rep.tie_breaks) + len(rep.connectivity)
    ok = rep.ok and rep.replay_digest == rep.digest
    criterion(11, "conservation, tie-breaks, replay", ok,
              f"{rep.trials} logged trials, {problems} problems, replay digest "
              f"{'identical' if rep.replay_digest == rep.digest else 'DIFFERS'} "
              f"({rep.digest[:12]})")
    assert ok


def test_c12_ancestor_mass_monotone(criterion):
    t = tm.build_tree(tm.spec("regular", 15, d=3))
    v = t.level(1).start
    # sleeper mean 2 as well, so the deeper levels are not saturated
    cfg = frog.FrogConfig(2.0, "truncated", horizon=40, trials=1000, seed=2, lambda_o=2.0)
    run = frog.run_frog(t, cfg, watch=frog.level_watch(t, v, 4))
    m = frog.ancestor_closed_mass(run, t, v, 4, margin=10)
    m = m[m[:, 0] > 0]  # trials in which v was activated
    rise = float(np.diff(m, axis=1).max())
    ok = rise <= 1e-12 and len(m) > 0
    criterion(12, "ancestor-closed mass nonincreasing", ok,
              f"1000 trials ({len(m)} with v activated), levels 0..4 below a level-1 vertex, "
              f"largest increase {rise:.1e}; mean vector {np.round(m.mean(axis=0), 4).tolist()}")
    assert ok
