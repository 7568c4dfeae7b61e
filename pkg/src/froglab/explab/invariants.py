"""Property checks across all modules, runnable from the command line.

Each check returns ``(passed, detail, counterexample)``.  Faults can be
injected by name to confirm a check notices them:

``flip-resistance``
    negate one edge resistance of the tree used by the tree checks.
``drop-tie-survivor``
    relabel one surviving first landing as eliminated in an audited log.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Callable

import numpy as np

from .. import amenability as am
from .. import frog, potential, tree as tm, walks
from ..kernels import EV_ELIM_TIE, EV_MOVE

MODULES = ("tree", "potential", "walks", "frog", "amenability")
FAULTS = ("flip-resistance", "drop-tie-survivor")


@dataclass(frozen=True)
class InvariantResult:
    module: str
    name: str
    passed: bool
    detail: str
    counterexample: str = ""
    seconds: float = 0.0

    def as_dict(self) -> dict:
        return {"module": self.module, "name": self.name, "passed": self.passed,
                "detail": self.detail, "counterexample": self.counterexample,
                "seconds": round(self.seconds, 3)}


Check = Callable[[int, frozenset], tuple[bool, str, str]]
_REGISTRY: list[tuple[str, str, Check]] = []


def _check(module: str, name: str):
    def deco(fn: Check) -> Check:
        _REGISTRY.append((module, name, fn))
        return fn
    return deco


# tree ---------------------------------------------------------------------


@_check("tree", "generated T_w trees validate")
def _tw_valid(seed, faults):
    for i in range(20):
        t = tm.random_tw_tree(3, 6, 3, 5, seed + i)
        if "flip-resistance" in faults and i == 0:
            r = t.resistance.copy()
            r[t.n // 2] = -r[t.n // 2]
            t = t.with_resistance(r)
        rep = tm.validate_Tw(t)
        if not rep.ok:
            return False, f"tree {t.tag} rejected", "; ".join(rep.violations[:3])
    return True, "20 random T(3,6,3) trees at depth 5 validate", ""


@_check("tree", "serialization round trip")
def _roundtrip(seed, faults):
    for t in (tm.build_tree(tm.spec("regular", 4, d=3)), tm.random_star_tree(3, 3, seed)):
        back = tm.parse_tree(tm.write_tree(t))
        if not back.same_as(t):
            return False, f"{t.tag} changed after write/parse", ""
    return True, "regular and star trees round-trip", ""


@_check("tree", "pipe contraction removes degree-2 vertices")
def _contract(seed, faults):
    base = tm.build_tree(tm.spec("regular", 4, d=3))
    rng = np.random.default_rng(seed)
    pipes = rng.integers(0, 4, base.n)
    dec = tm.decorate(base, pipe_lengths=pipes)
    c = tm.contract_pipes(dec)
    deg = c.n_children + (np.arange(c.n) > 0)
    bad = np.flatnonzero((deg == 2) & (c.n_children > 0))
    if len(bad):
        return False, "degree-2 vertex survived", f"vertex {int(c.ids[bad[0]])}"
    want = 1 + pipes[1:]
    got = np.array([c.resistance[c.index_of(int(i))] for i in base.ids[1:]])
    if not np.array_equal(got, want):
        return False, "contracted resistances differ from pipe lengths", ""
    return True, "resistance = pipe edge count on every contracted edge", ""


# potential -----------------------------------------------------------------


@_check("potential", "resistance brackets contain closed forms")
def _closed_forms(seed, faults):
    for D, d, r in ((3, 3, 1), (3, 3, 2), (4, 4, 1)):
        b = potential.LevelProfile.regular(D, 30, r).branch_resistance(1)
        want = r * (d - 1) / (d - 2)
        if not (b.lower <= want <= b.upper) or b.upper - b.lower >= 1e-6:
            return False, "closed form outside bracket", f"(D,d,r)={D, d, r}: [{b.lower}, {b.upper}] vs {want}"
    return True, "3 parameter sets at depth 30", ""


@_check("potential", "harmonic measure is a probability")
def _harm(seed, faults):
    t = tm.random_tw_tree(3, 4, 2, 13, seed)
    hm = potential.harmonic_measure(t, 0, 3)
    s = float(hm.mass.sum())
    if abs(s - 1) > 1e-12:
        return False, "level masses do not sum to 1", f"sum = {s!r}"
    b = tm.build_tree(tm.spec("kary", 16, k=2))
    u = potential.harmonic_measure(b, 0, 5)
    if np.max(np.abs(u.mass - 2.0**-5)) > 1e-12:
        return False, "binary tree measure not uniform", ""
    return True, "sums to 1; uniform on the binary tree", ""


@_check("potential", "harmonic/return comparison floor")
def _harm_return(seed, faults):
    t = tm.build_tree(tm.spec("regular", 16, d=3))
    rep = potential.verify_harm_return_comparison(t, t.level(2).start, 2)
    return rep.certified, f"min ratio {rep.min_ratio:.4g} vs floor {rep.floor:.4g}", rep.note


# walks --------------------------------------------------------------------


@_check("walks", "LERW transition bounds on random T(3,6,3)")
def _bounds(seed, faults):
    unc = 0
    for i in range(100):
        t = tm.random_tw_tree(3, 6, 3, 8, seed + i)
        rep = walks.verify_transition_bounds(t, params=(3, 6, 3))
        unc += rep.uncertified
        if rep.violations:
            return False, f"{len(rep.violations)} violations", f"{t.tag}: {rep.violations[0]}"
    return True, f"100 trees, 0 violations, {unc} uncertified", ""


@_check("walks", "step laws sum to one")
def _laws(seed, faults):
    t = tm.random_tw_tree(3, 6, 3, 12, seed)
    for v in list(t.level(1)) + list(t.level(2))[:5]:
        law = walks.lerw_first_step(t, v)
        if abs(law.prob.sum() - 1) > 1e-9:
            return False, "first-step law does not sum to 1", f"vertex {int(t.ids[v])}"
        nb = t.neighbors(v)[1] if v else t.neighbors(v)[0]
        law = walks.lerw_next_step(t, v, nb)
        if abs(law.prob.sum() - 1) > 1e-9:
            return False, "next-step law does not sum to 1", f"vertex {int(t.ids[v])}"
    return True, "first and next step laws", ""


# frog ---------------------------------------------------------------------


@_check("frog", "truncated model conservation, tie-breaks, connectivity, replay")
def _audit(seed, faults):
    t = tm.build_tree(tm.spec("regular", 7, d=3))
    cfg = frog.FrogConfig(0.5, "truncated", horizon=30, trials=200, seed=seed)
    if "drop-tie-survivor" in faults:
        run = frog.run_frog(t, cfg, log=True)
        log = run.log.copy()
        first = np.flatnonzero((log["code"] == EV_MOVE) & (log["vertex"] > 0))[0]
        log["code"][first] = EV_ELIM_TIE
        bad = frog.check_tie_breaks(replace(run, log=log))
        return not bad, "fault injected into the log", "; ".join(bad[:3])
    rep = frog.audit_truncated(t, cfg, chunk=100)
    problems = rep.conservation + rep.tie_breaks + rep.connectivity
    if rep.replay_digest != rep.digest:
        problems += ("replay digest differs",)
    return rep.ok, f"{cfg.trials} logged trials", "; ".join(problems[:3])


@_check("frog", "single walker matches the return DP")
def _lam0(seed, faults):
    t = tm.build_tree(tm.spec("regular", 10, d=3))
    run = frog.run_frog(t, frog.FrogConfig(0.0, horizon=20, trials=20_000, seed=seed))
    want = potential.expected_root_visits(t, 20)
    m = run.returns.mean()
    se = run.returns.std(ddof=1) / math.sqrt(len(run))
    ok = abs(m - want) <= 3 * se
    return ok, f"mean {m:.4f} vs {want:.4f} (3 sigma = {3 * se:.4f})", ""


@_check("frog", "conditional activation floor")
def _floor(seed, faults):
    t = tm.build_tree(tm.spec("regular", 5, d=3))
    for lam in (0.5, 1.0, 2.0):
        e = frog.estimate_conditional_activation(
            t, frog.FrogConfig(lam, "truncated", horizon=60, seed=seed), t.level(2).start,
            accepted=10_000)
        floor = 1 - math.exp(-lam)
        if e.estimate < floor - 3 * e.sigma:
            return False, f"lambda {lam}: {e.estimate:.4f} below floor {floor:.4f}", ""
    return True, "lambda 0.5, 1, 2 on Regular(3)", ""


@_check("frog", "standard dominates truncated")
def _dom(seed, faults):
    t = tm.build_tree(tm.spec("regular", 8, d=3))
    a = frog.run_frog(t, frog.FrogConfig(1.0, horizon=30, trials=2000, seed=seed))
    b = frog.run_frog(t, frog.FrogConfig(1.0, "truncated", horizon=30, trials=2000, seed=seed + 1,
                                         lambda_o=1.0))
    res = frog.dominance_test(a, b)
    return res.verdict == "Pass", f"D = {res.statistic:.4f}, band {res.band:.4f}", ""


# amenability ----------------------------------------------------------------


@_check("amenability", "expansion nonincreasing in k and above the analytic bound")
def _phi(seed, faults):
    for L in (1, 2, 3):
        t = tm.random_star_tree(L, 5, seed + L)
        rep = am.enumerate_edge_expansion(t, 12, L=L)
        per = np.fmin.accumulate(np.array(rep.per_size))
        if np.any(np.diff(per) > 0):
            return False, "running minimum increased", t.tag
        if not rep.satisfies_analytic:
            return False, f"phi {rep.phi_enumerated} below 1/(9L^2)", t.tag
    return True, "star trees with L = 1, 2, 3 at k = 12", ""


@_check("amenability", "threshold arithmetic")
def _arith(seed, faults):
    for L in range(1, 11):
        if am.corollary_bound(L) > am.transience_threshold(am.tree_iso_bound(L)):
            return False, "corollary bound above threshold", f"L = {L}"
    pts = [Fraction(i, 10) for i in range(1, 11)]
    vals = [am.transience_threshold(p) for p in pts]
    if any(b <= a for a, b in zip(vals, vals[1:])):
        return False, "threshold not increasing", ""
    for p, v in zip(pts, vals):
        h = p * p / 2
        if v != h / (1 - h):
            return False, "identity fails", f"phi = {p}"
    return True, "exact rational checks", ""


@_check("amenability", "branching walk dominates the frog model")
def _brw(seed, faults):
    t = tm.build_tree(tm.spec("regular", 8, d=3))
    b = am.run_brw(t, 0.05, 30, 2000, seed)
    f = frog.run_frog(t, frog.FrogConfig(0.05, horizon=30, trials=2000, seed=seed + 1))
    res = frog.dominance_test(b.root_visits, f.returns)
    return res.verdict == "Pass", f"D = {res.statistic:.4f}, band {res.band:.4f}", ""


def run_invariant_suite(scope=None, seed: int = 0, faults=()) -> list[InvariantResult]:
    """Run every registered check in the given modules (all when ``scope`` is empty)."""
    scope = tuple(scope or MODULES)
    unknown = set(scope) - set(MODULES)
    if unknown:
        raise ValueError(f"unknown modules {sorted(unknown)}; choose from {', '.join(MODULES)}")
    faults = frozenset(faults)
    if faults - set(FAULTS):
        raise ValueError(f"unknown faults {sorted(faults - set(FAULTS))}")
    out = []
    for module, name, fn in _REGISTRY:
        if module not in scope:
            continue
        t0 = time.perf_counter()
        try:
            ok, detail, cex = fn(seed, faults)
        except Exception as exc:
            ok, detail, cex = False, "check raised", f"{type(exc).__name__}: {exc}"
        out.append(InvariantResult(module, name, bool(ok), detail, cex, time.perf_counter() - t0))
    return out
