"""Standard and truncated frog models on weighted trees.

Time is discrete and synchronous.  One particle starts awake at the root;
every other vertex holds a Poisson number of sleepers that wake when the
vertex is first landed on and move from the next step.

Standard model
    awake particles perform the conductance-weighted walk; the root is not
    absorbing and every landing on it counts as a return.
Truncated model
    particles follow loop-erased walk in Markov form and are absorbed at
    the root.  A particle stepping away from the root onto a visited vertex
    is eliminated.  When several particles first land on a vertex in the
    same step, only the one with the largest uniform mark survives (equal
    marks go to the smaller particle id).  Eliminated landers still count as
    having landed, so the vertex is visited and its sleepers wake.

Particles reaching a cutoff leaf are removed as escaped.  Cutoff leaves hold
no sleepers.

Particle ids are ``origin << 32 | k`` for the k-th sleeper of vertex index
``origin``; the root particle is 0.  Its draws use the streams
``stream_key(seed, trial, origin, k, WALK / MARK)``; draw i of the walk
stream is its (i+1)-th move and draw i of the mark stream is the mark for
that move.

Event log file layout (little endian, one record per event)::

    u32 payload length (= 21)
    u32 step | u64 particle id | u64 vertex id | u8 event code

A record with code 255 opens each trial; its particle field holds the trial
id and its step and vertex fields are zero.
"""
from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels
from .kernels import (
    EV_ABSORB, EV_ELIM_TIE, EV_ELIM_VISITED, EV_ESCAPE, EV_MOVE, EV_SPAWN, LOG_DTYPE, ROLE_MARK,
    ROLE_WALK,
)
from .parallel import ordered_map, worker_count
from .potential import harmonic_measure
from .rng import stream_key_array, uniform_keys
from .tree import CONTINUES, TreeError, WeightedTree, validate_Tw
from .walks import lerw_weights, srw_weights

TRIAL_MARK = 255
COUNTER_NAMES = ("ever_active", "sleepers", "eliminated_visited", "eliminated_tie", "absorbed",
                 "escaped", "alive_at_horizon", "stuck")
LANDING_CODES = (EV_MOVE, EV_ELIM_VISITED, EV_ELIM_TIE, EV_ABSORB, EV_ESCAPE)


class Model(str, Enum):
    STANDARD = "standard"
    TRUNCATED = "truncated"


class Placement(str, Enum):
    ALL_NONROOT = "all_nonroot"
    BRANCH_POINTS = "branch_points"


@dataclass(frozen=True)
class FrogConfig:
    lam: float
    model: Model = Model.STANDARD
    horizon: int = 100
    trials: int = 1
    seed: int = 0
    lambda_o: float | None = None
    placement: Placement = Placement.ALL_NONROOT
    max_particles: int = 10**7

    def __post_init__(self) -> None:
        object.__setattr__(self, "model", Model(self.model))
        object.__setattr__(self, "placement", Placement(self.placement))
        if not self.lam >= 0:
            raise ValueError("lambda must be >= 0")
        if self.lambda_o is not None and not self.lambda_o >= 0:
            raise ValueError("lambda_o must be >= 0")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 bits")

    def sleeper_mean(self, tree: WeightedTree) -> float:
        """Poisson mean per eligible vertex: lambda, or lambda_o (default 2 Delta r lambda) when truncated."""
        if self.model is Model.STANDARD:
            return self.lam
        if self.lambda_o is not None:
            return self.lambda_o
        _, Delta, r = tree.meta
        return 2.0 * Delta * r * self.lam


def sleeper_means(tree: WeightedTree, config: FrogConfig) -> np.ndarray:
    mean = np.full(tree.n, float(config.sleeper_mean(tree)))
    mean[0] = 0.0
    mean[tree.leaf_mode == CONTINUES] = 0.0
    if config.placement is Placement.BRANCH_POINTS:
        deg = tree.n_children + (np.arange(tree.n) > 0)
        mean[deg < 3] = 0.0
    return mean


# ---------------------------------------------------------------------------
# results


@dataclass(frozen=True)
class SimOutcome:
    """One trial."""

    trial: int
    returns_to_root: int
    activated_count: int
    max_activation_depth: int
    counters: dict
    watch: np.ndarray
    activation_time: np.ndarray  # per watched vertex, -1 if never visited
    up_crossings: np.ndarray  # per watched vertex, steps from it to its parent
    arrivals: np.ndarray
    aborted: bool
    log: np.ndarray | None

    @property
    def activated(self) -> np.ndarray:
        return self.activation_time >= 0

    def to_bytes(self) -> bytes:
        head = struct.pack("<qqqq?", self.trial, self.returns_to_root, self.activated_count,
                           self.max_activation_depth, self.aborted)
        cnt = np.array([self.counters[k] for k in COUNTER_NAMES], "<i8").tobytes()
        parts = [head, cnt, np.asarray(self.watch, "<i8").tobytes(),
                 np.asarray(self.activation_time, "<i8").tobytes(),
                 np.asarray(self.up_crossings, "<i8").tobytes(),
                 np.asarray(self.arrivals, "<i8").tobytes()]
        if self.log is not None:
            parts.append(self.log.tobytes())
        return b"".join(parts)


@dataclass(frozen=True)
class FrogRun:
    """A batch of trials of one configuration on one tree."""

    config: FrogConfig
    tree_tag: str
    trials: np.ndarray
    returns: np.ndarray
    activated: np.ndarray
    max_depth: np.ndarray
    counters: np.ndarray
    watch: np.ndarray
    watch_time: np.ndarray
    watch_up: np.ndarray
    arrivals: np.ndarray
    aborted: np.ndarray
    log: np.ndarray | None
    sleeper_mean: float = 0.0
    backend: str = field(default=kernels.BACKEND, compare=False)

    def __len__(self) -> int:
        return len(self.trials)

    def outcome(self, i: int) -> SimOutcome:
        log = None
        if self.log is not None:
            log = self.log[self.log["trial"] == self.trials[i]]
        return SimOutcome(
            int(self.trials[i]), int(self.returns[i]), int(self.activated[i]),
            int(self.max_depth[i]), dict(zip(COUNTER_NAMES, map(int, self.counters[i]))),
            self.watch, self.watch_time[i], self.watch_up[i], self.arrivals[i],
            bool(self.aborted[i]), log,
        )

    def watched(self, vertices: Sequence[int]) -> np.ndarray:
        """Column positions of ``vertices`` in the watch arrays."""
        pos = {int(v): j for j, v in enumerate(self.watch)}
        try:
            return np.array([pos[int(v)] for v in vertices], np.int64)
        except KeyError as exc:
            raise ValueError(f"vertex index {exc.args[0]} was not watched in this run") from None

    def to_bytes(self) -> bytes:
        arrs = [self.trials, self.returns, self.activated, self.max_depth, self.counters,
                self.watch, self.watch_time, self.watch_up, self.arrivals]
        out = [np.ascontiguousarray(a, "<i8").tobytes() for a in arrs]
        out.append(self.aborted.astype("i1").tobytes())
        if self.log is not None:
            out.append(self.log.tobytes())
        return b"".join(out)

    def digest(self) -> str:
        return hashlib.sha256(self.to_bytes()).hexdigest()


def _concat(parts: list[dict], key: str) -> np.ndarray:
    return np.concatenate([p[key] for p in parts])


def run_frog(tree: WeightedTree, config: FrogConfig, watch: Sequence[int] | str = (),
             log: bool = False, steps: bool = False, trials: np.ndarray | None = None,
             check_tree: bool = True, workers: int | None = None) -> FrogRun:
    """Run ``config.trials`` trials (or the given trial ids) and collect per-trial results."""
    if config.model is Model.TRUNCATED and check_tree:
        val = validate_Tw(tree)
        if not val.ok:
            raise TreeError("truncated model needs a T_w tree: " + "; ".join(val.violations[:3]))
    ids = np.arange(config.trials, dtype=np.int64) if trials is None else \
        np.ascontiguousarray(trials, dtype=np.int64)
    w_idx = np.arange(tree.n, dtype=np.int64) if isinstance(watch, str) and watch == "all" else \
        np.ascontiguousarray(list(watch), dtype=np.int64)
    ptr, nbr, slot = tree.adjacency()
    weight = lerw_weights(tree) if config.model is Model.TRUNCATED else srw_weights(tree)
    vkind = np.ascontiguousarray(tree.leaf_mode, dtype=np.int8)
    means = sleeper_means(tree, config)
    model = 1 if config.model is Model.TRUNCATED else 0

    def chunk(sel: np.ndarray) -> dict:
        return kernels.frog_batch(model, ptr, nbr, weight, tree.parent, slot, vkind, tree.depth,
                                  means, config.seed, np.ascontiguousarray(sel), config.horizon,
                                  w_idx, steps, log, config.max_particles)

    nw = worker_count(workers)
    pieces = np.array_split(ids, max(1, min(nw * 4, len(ids)))) if nw > 1 else [ids]
    parts = ordered_map(chunk, pieces, nw)
    return FrogRun(
        config, tree.tag, ids, _concat(parts, "returns"), _concat(parts, "activated"),
        _concat(parts, "max_depth"), _concat(parts, "counters"), w_idx,
        _concat(parts, "watch_time"), _concat(parts, "watch_up"), _concat(parts, "arrivals"),
        _concat(parts, "aborted"), _concat(parts, "log") if log else None,
        config.sleeper_mean(tree),
    )


def run_standard_frog(tree: WeightedTree, config: FrogConfig, **kw) -> FrogRun:
    if config.model is not Model.STANDARD:
        raise ValueError("config.model must be standard")
    return run_frog(tree, config, **kw)


def run_truncated_frog(tree: WeightedTree, config: FrogConfig, **kw) -> FrogRun:
    if config.model is not Model.TRUNCATED:
        raise ValueError("config.model must be truncated")
    return run_frog(tree, config, **kw)


# ---------------------------------------------------------------------------
# observables


def measure_level_mass(run: FrogRun | SimOutcome, tree: WeightedTree, v: int, n: int,
                       margin: int = 0) -> np.ndarray | float:
    """Harmonic mass of T_n(v) (seen from v) carried by activated vertices."""
    hm = harmonic_measure(tree, v, n, margin)
    return _activated_mass(run, hm.vertices, hm.mass)


def _activated_mass(run, verts: np.ndarray, mass: np.ndarray):
    if isinstance(run, SimOutcome):
        pos = {int(x): j for j, x in enumerate(run.watch)}
        try:
            cols = [pos[int(x)] for x in verts]
        except KeyError:
            raise ValueError("level vertices were not watched in this run") from None
        return float((run.activation_time[cols] >= 0) @ mass)
    cols = run.watched(verts)
    return (run.watch_time[:, cols] >= 0) @ mass


def ancestor_closed_mass(run: FrogRun | SimOutcome, tree: WeightedTree, v: int, n: int,
                         margin: int = 0) -> np.ndarray:
    """Per level j = 0..n: harmonic mass of activated vertices of T_j(v)."""
    cols = [np.atleast_1d(_activated_mass(run, *_level(tree, v, j, margin))) for j in range(n + 1)]
    out = np.column_stack(cols)
    return out[0] if isinstance(run, SimOutcome) else out


def _level(tree, v, j, margin):
    hm = harmonic_measure(tree, v, j, margin)
    return hm.vertices, hm.mass


def level_watch(tree: WeightedTree, v: int, n: int) -> np.ndarray:
    """All vertices of T(v) down to n levels below v."""
    return np.concatenate([np.arange(r.start, r.stop) for r in
                           (tree.descendants_at(v, k) for k in range(n + 1))])


def particle_origin(pid: np.ndarray) -> np.ndarray:
    return (np.asarray(pid, np.uint64) >> np.uint64(32)).astype(np.int64)


def count_V(run: FrogRun, tree: WeightedTree, v: int) -> np.ndarray:
    """Per trial: particles originating in T(v) that land on the parent of v (from the event log)."""
    if run.log is None:
        raise ValueError("count_V needs a run with the event log enabled")
    if v == 0:
        raise ValueError("the root has no parent")
    log = run.log
    w = int(tree.parent[v])
    land = np.isin(log["code"], LANDING_CODES) & (log["vertex"] == w)
    origin = particle_origin(log["particle"][land])
    inside = np.array([tree.is_ancestor(v, int(o)) for o in origin], bool) if len(origin) else \
        np.zeros(0, bool)
    rows = log[land][inside]
    out = np.zeros(len(run), np.int64)
    if len(rows):
        pairs = np.unique(np.stack([rows["trial"], rows["particle"].astype(np.int64)]), axis=1)
        tpos = {int(t): i for i, t in enumerate(run.trials)}
        for t in pairs[0]:
            out[tpos[int(t)]] += 1
    return out


# ---------------------------------------------------------------------------
# conditional activation


@dataclass(frozen=True)
class ConditionalEstimate:
    vertex: int
    estimate: float
    sigma: float
    ci_low: float
    ci_high: float
    accepted: int
    attempted: int
    inconclusive: bool
    sleeper_mean: float


def wilson_interval(k: int, n: int, z: float = 1.959963984540054) -> tuple[float, float]:
    if n == 0:
        return (0.0, 1.0)
    p = k / n
    den = 1 + z * z / n
    mid = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return max(0.0, mid - half), min(1.0, mid + half)


def root_first_steps(tree: WeightedTree, config: FrogConfig, trials: np.ndarray) -> np.ndarray:
    """Vertex index of the root particle's first landing in each trial."""
    w = lerw_weights(tree) if config.model is Model.TRUNCATED else srw_weights(tree)
    ptr, nbr, _ = tree.adjacency()
    ws = w[ptr[0]:ptr[1]]
    total = 0.0
    for x in ws:
        total += x
    # same subtraction chain as the kernels' slot scan, so the float rounding agrees
    x = uniform_keys(stream_key_array(config.seed, trials, 0, 0, ROLE_WALK), 0) * total
    out = np.full(len(x), -1, np.int64)
    for j, wj in enumerate(ws):
        if wj <= 0.0:
            continue
        out[out < 0] = np.where(x[out < 0] < wj, j, -1)
        x = x - wj
        last = j
    out[out < 0] = last
    return nbr[ptr[0] + out]


def estimate_conditional_activation(tree: WeightedTree, config: FrogConfig, u: int,
                                    accepted: int | None = None, trials: int | None = None,
                                    block: int = 20_000, max_attempts: int = 10**8,
                                    prefilter: bool = True) -> ConditionalEstimate:
    """P(u activated | parent(u) activated) under the truncated model, by rejection.

    Trials are drawn in blocks of consecutive ids.  Sampling stops once
    ``accepted`` trials met the condition, or after ``trials`` attempts.
    When the parent sits on level 1 it is activated exactly when the root
    particle steps there first, so rejected ids are skipped without being
    simulated.  The accepted set is identical either way.
    """
    if tree.depth[u] < 2:
        raise ValueError("u must be at depth >= 2")
    if config.model is not Model.TRUNCATED:
        config = replace(config, model=Model.TRUNCATED)
    if accepted is None and trials is None:
        trials = config.trials
    w = int(tree.parent[u])
    fast = prefilter and tree.depth[w] == 1
    hits = got = attempted = 0
    start = 0
    while True:
        if trials is not None and attempted >= trials:
            break
        if accepted is not None and got >= accepted:
            break
        if attempted >= max_attempts:
            break
        size = block if trials is None else min(block, trials - attempted)
        ids = np.arange(start, start + size, dtype=np.int64)
        start += size
        attempted += size
        if fast:
            ids = ids[root_first_steps(tree, config, ids) == w]
            if accepted is not None:
                ids = ids[: max(0, accepted - got)]
            if len(ids) == 0:
                continue
        run = run_frog(tree, config, watch=[w, u], trials=ids)
        cond = run.watch_time[:, 0] >= 0
        if accepted is not None:
            keep = np.flatnonzero(cond)[: max(0, accepted - got)]
        else:
            keep = np.flatnonzero(cond)
        got += len(keep)
        hits += int((run.watch_time[keep, 1] >= 0).sum())
    mean = config.sleeper_mean(tree)
    if got == 0:
        return ConditionalEstimate(u, math.nan, math.nan, 0.0, 1.0, 0, attempted, True, mean)
    p = hits / got
    lo, hi = wilson_interval(hits, got)
    return ConditionalEstimate(u, p, math.sqrt(max(p * (1 - p), 0.0) / got), lo, hi, got,
                               attempted, False, mean)


@dataclass(frozen=True)
class RecurrenceDiagnostics:
    alpha: float
    beta: float
    n_choice: int
    estimates: dict  # depth -> ConditionalEstimate


def recurrence_diagnostics(tree: WeightedTree, config: FrogConfig, alpha: float,
                           depths: Sequence[int] = (2,), trials: int = 10_000) -> RecurrenceDiagnostics:
    delta, _, r = tree.meta
    if delta < 3:
        raise ValueError("beta needs minimum degree >= 3")
    beta = (delta - 2) / (2 * r + delta - 2)
    n_choice = int(math.floor(math.exp(alpha / 4))) if alpha >= 0 else 0
    est = {}
    for d in depths:
        u = tree.level(d).start
        est[d] = estimate_conditional_activation(tree, config, u, trials=trials)
    return RecurrenceDiagnostics(alpha, beta, n_choice, est)


# ---------------------------------------------------------------------------
# stochastic dominance


@dataclass(frozen=True)
class DominanceResult:
    statistic: float  # max_t (F_standard(t) - F_truncated(t))
    band: float
    reverse: float  # max_t (F_truncated(t) - F_standard(t))
    n: int
    m: int
    verdict: str
    rule: str = ("one-sided two-sample DKW band: Fail if max(F_std - F_trunc) exceeds the band, "
                 "Inconclusive if either sample is below the minimum size, else Pass")


def dkw_band(n: int, m: int, alpha: float) -> float:
    return math.sqrt((n + m) / (2.0 * n * m) * math.log(1.0 / alpha))


def dominance_test(standard: FrogRun | np.ndarray, truncated: FrogRun | np.ndarray,
                   alpha: float = 0.001, min_trials: int = 100,
                   require_matched: bool = True) -> DominanceResult:
    """Does the first sample stochastically dominate the second?"""
    if isinstance(standard, FrogRun) and isinstance(truncated, FrogRun):
        if standard.tree_tag != truncated.tree_tag:
            raise ValueError(f"different trees: {standard.tree_tag} vs {truncated.tree_tag}")
        if len(standard) != len(truncated):
            raise ValueError("dominance test needs equal trial counts")
        if require_matched:
            cs, ct = standard.config, truncated.config
            if standard.sleeper_mean != truncated.sleeper_mean or cs.placement != ct.placement \
                    or cs.horizon != ct.horizon:
                raise ValueError(
                    f"configurations are not matched: sleeper mean {standard.sleeper_mean} vs "
                    f"{truncated.sleeper_mean}, placement {cs.placement.value} vs "
                    f"{ct.placement.value}, horizon {cs.horizon} vs {ct.horizon}")
    x = np.asarray(getattr(standard, "returns", standard))
    y = np.asarray(getattr(truncated, "returns", truncated))
    n, m = len(x), len(y)
    if n == 0 or m == 0:
        raise ValueError("empty sample")
    grid = np.union1d(x, y)
    fx = np.searchsorted(np.sort(x), grid, side="right") / n
    fy = np.searchsorted(np.sort(y), grid, side="right") / m
    d = float(max(0.0, (fx - fy).max()))
    rev = float(max(0.0, (fy - fx).max()))
    band = dkw_band(n, m, alpha)
    if d > band:
        verdict = "Fail"
    elif min(n, m) < min_trials:
        verdict = "Inconclusive"
    else:
        verdict = "Pass"
    return DominanceResult(d, band, rev, n, m, verdict)


# ---------------------------------------------------------------------------
# invariant checks


def check_conservation(run: FrogRun) -> list[str]:
    """Particle bookkeeping identities, per trial."""
    c = run.counters
    bad = []
    born = c[:, 0] != 1 + c[:, 1]
    died = c[:, 0] != c[:, 2:].sum(axis=1)
    for i in np.flatnonzero(born | died):
        bad.append(f"trial {int(run.trials[i])}: counters {dict(zip(COUNTER_NAMES, c[i].tolist()))}")
    if run.config.model is Model.STANDARD:
        for i in np.flatnonzero(c[:, 2:5].sum(axis=1) > 0):
            bad.append(f"trial {int(run.trials[i])}: standard model eliminated or absorbed a particle")
    return bad


def resolve_tie(marks: np.ndarray, pids: np.ndarray) -> int:
    """Index of the survivor: largest mark, ties to the smaller particle id."""
    marks = np.asarray(marks)
    pids = np.asarray(pids, np.uint64)
    top = marks == marks.max()
    cand = np.flatnonzero(top)
    return int(cand[np.argmin(pids[cand])])


def _pair_lookup(keys_trial, keys_item, q_trial, q_item) -> np.ndarray:
    """Row in the key table of every (trial, item) query, -1 when absent."""
    kt = np.asarray(keys_trial, np.int64)
    ki = np.asarray(keys_item).astype(np.uint64)
    both = np.concatenate([np.stack([kt.view(np.uint64), ki], 1),
                           np.stack([np.asarray(q_trial, np.int64).view(np.uint64),
                                     np.asarray(q_item).astype(np.uint64)], 1)])
    _, inv = np.unique(both, axis=0, return_inverse=True)
    inv = inv.ravel()
    slot = np.full(inv.max() + 1 if len(inv) else 0, -1, np.int64)
    slot[inv[:len(kt)]] = np.arange(len(kt))
    return slot[inv[len(kt):]]


def _first_landings(log: np.ndarray) -> np.ndarray:
    """Landing rows at the first-landing step of their (trial, vertex), sorted by that pair."""
    land = log[np.isin(log["code"], LANDING_CODES)]
    land = land[np.lexsort((land["particle"], land["step"], land["vertex"], land["trial"]))]
    new = np.ones(len(land), bool)
    new[1:] = (land["trial"][1:] != land["trial"][:-1]) | (land["vertex"][1:] != land["vertex"][:-1])
    first_step = land["step"][new][np.cumsum(new) - 1]
    return land[land["step"] == first_step]


def _groups(rows: np.ndarray) -> np.ndarray:
    new = np.ones(len(rows), bool)
    new[1:] = (rows["trial"][1:] != rows["trial"][:-1]) | (rows["vertex"][1:] != rows["vertex"][:-1])
    return np.cumsum(new) - 1


def check_tie_breaks(run: FrogRun) -> list[str]:
    """Every first landing keeps exactly one particle, the one the marks select."""
    if run.log is None:
        raise ValueError("tie-break audit needs the event log")
    if run.config.model is not Model.TRUNCATED:
        return []
    log = run.log
    first = _first_landings(log)
    first = first[first["vertex"] != 0]
    bad: list[str] = []
    if len(first) == 0:
        return bad
    gid = _groups(first)
    surv = first["code"] != EV_ELIM_TIE
    nsurv = np.bincount(gid, weights=surv).astype(np.int64)
    for g in np.flatnonzero(nsurv != 1)[:20]:
        row = first[np.flatnonzero(gid == g)[0]]
        bad.append(f"trial {int(row['trial'])} vertex {int(row['vertex'])}: {int(nsurv[g])} survivors")
    contested = np.bincount(gid)[gid] > 1
    if not contested.any():
        return bad
    # recompute marks: the mark for a move is draw (moves made before it) of the mark stream
    rows, g = first[contested], gid[contested]
    spawn = log[log["code"] == EV_SPAWN]
    at = _pair_lookup(spawn["trial"], spawn["particle"], rows["trial"], rows["particle"])
    if np.any(at < 0):
        bad.append("landing by a particle with no spawn record")
        return bad
    pid = rows["particle"].astype(np.uint64)
    origin = (pid >> np.uint64(32)).astype(np.int64)
    k = (pid & np.uint64(0xFFFFFFFF)).astype(np.int64)
    keys = stream_key_array(run.config.seed, rows["trial"], origin, k, ROLE_MARK)
    draw = rows["step"].astype(np.int64) - spawn["step"][at].astype(np.int64) - 1
    marks = uniform_keys(keys, draw)
    # winner = first row per group after sorting by (mark desc, particle id asc)
    order = np.lexsort((pid, -marks, g))
    head = np.ones(len(order), bool)
    head[1:] = g[order][1:] != g[order][:-1]
    winners = order[head]
    for w in winners[~surv[contested][winners]][:20]:
        bad.append(f"trial {int(rows['trial'][w])} vertex {int(rows['vertex'][w])}: "
                   "survivor is not the max-mark particle")
    return bad


def check_connectivity(run: FrogRun, tree: WeightedTree) -> list[str]:
    """Visited vertices plus the root form a connected set at every step."""
    if run.log is None:
        raise ValueError("connectivity audit needs the event log")
    first = _first_landings(run.log)
    head = np.ones(len(first), bool)
    head[1:] = _groups(first)[1:] != _groups(first)[:-1]
    first = first[head]
    first = first[first["vertex"] != 0]
    if len(first) == 0:
        return []
    par = tree.parent[first["vertex"]]
    at = _pair_lookup(first["trial"], first["vertex"], first["trial"], par)
    pstep = np.where(at >= 0, first["step"][np.maximum(at, 0)].astype(np.int64), -1)
    # walkers move one edge per step, so a non-root parent is visited strictly earlier
    ok = (par == 0) | ((at >= 0) & (pstep < first["step"]))
    return [f"trial {int(r['trial'])}: vertex {int(tree.ids[r['vertex']])} visited at step "
            f"{int(r['step'])} before its parent" for r in first[~ok][:20]]


@dataclass(frozen=True)
class AuditReport:
    trials: int
    conservation: tuple[str, ...]
    tie_breaks: tuple[str, ...]
    connectivity: tuple[str, ...]
    digest: str
    replay_digest: str | None

    @property
    def ok(self) -> bool:
        return not (self.conservation or self.tie_breaks or self.connectivity) and (
            self.replay_digest is None or self.replay_digest == self.digest)


def audit_truncated(tree: WeightedTree, config: FrogConfig, chunk: int = 1000,
                    replay: bool = True) -> AuditReport:
    """Run ``config.trials`` logged trials in chunks and check every invariant."""
    if config.model is not Model.TRUNCATED:
        raise ValueError("audit targets the truncated model")
    h = hashlib.sha256()
    h2 = hashlib.sha256() if replay else None
    cons: list[str] = []
    ties: list[str] = []
    conn: list[str] = []
    for start in range(0, config.trials, chunk):
        ids = np.arange(start, min(config.trials, start + chunk), dtype=np.int64)
        run = run_frog(tree, config, log=True, trials=ids)
        cons += check_conservation(run)
        ties += check_tie_breaks(run)
        conn += check_connectivity(run, tree)
        h.update(run.to_bytes())
        if h2 is not None:
            h2.update(run_frog(tree, config, log=True, trials=ids).to_bytes())
    return AuditReport(config.trials, tuple(cons), tuple(ties), tuple(conn), h.hexdigest(),
                       h2.hexdigest() if h2 is not None else None)


# ---------------------------------------------------------------------------
# file output


def write_outcome_csv(run: FrogRun, path: str | Path, header: str = "") -> None:
    with open(path, "w") as fh:
        fh.write(header)
        fh.write("trial_id,returns_to_root,activated_count,max_activation_depth\n")
        for t, r, a, d in zip(run.trials, run.returns, run.activated, run.max_depth):
            fh.write(f"{int(t)},{int(r)},{int(a)},{int(d)}\n")


_REC = struct.Struct("<IIQQB")


def write_event_log(run: FrogRun, tree: WeightedTree, path: str | Path) -> int:
    """Write the run's event log as length-prefixed records; returns the record count."""
    if run.log is None:
        raise ValueError("run has no event log")
    log = run.log
    count = 0
    with open(path, "wb") as fh:
        for trial in run.trials:
            fh.write(_REC.pack(21, 0, int(trial), 0, TRIAL_MARK))
            count += 1
            rows = log[log["trial"] == trial]
            rec = np.empty(len(rows), dtype=np.dtype([("len", "<u4"), ("step", "<u4"),
                                                      ("particle", "<u8"), ("vertex", "<u8"),
                                                      ("code", "u1")]))
            rec["len"] = 21
            rec["step"] = rows["step"]
            rec["particle"] = rows["particle"]
            rec["vertex"] = tree.ids[rows["vertex"]]
            rec["code"] = rows["code"]
            fh.write(rec.tobytes())
            count += len(rows)
    return count


def read_event_log(path: str | Path) -> list[tuple[int, np.ndarray]]:
    """Parse a file written by :func:`write_event_log` into (trial, records) pairs."""
    data = Path(path).read_bytes()
    dt = np.dtype([("len", "<u4"), ("step", "<u4"), ("particle", "<u8"), ("vertex", "<u8"),
                   ("code", "u1")])
    if len(data) % dt.itemsize:
        raise ValueError("truncated event log")
    rec = np.frombuffer(data, dtype=dt)
    if np.any(rec["len"] != 21):
        raise ValueError("bad record length")
    out = []
    starts = np.flatnonzero(rec["code"] == TRIAL_MARK)
    bounds = list(starts) + [len(rec)]
    for a, b in zip(bounds, bounds[1:]):
        out.append((int(rec["particle"][a]), rec[a + 1:b]))
    return out


__all__ = [
    "FrogConfig", "FrogRun", "SimOutcome", "Model", "Placement", "run_frog", "run_standard_frog",
    "run_truncated_frog", "measure_level_mass", "ancestor_closed_mass", "count_V",
    "estimate_conditional_activation", "dominance_test", "check_conservation",
    "check_tie_breaks", "check_connectivity", "audit_truncated", "write_outcome_csv",
    "write_event_log", "read_event_log", "LOG_DTYPE",
]
