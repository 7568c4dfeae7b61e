"""Random walk and loop-erased random walk engines on weighted trees."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .kernels import ROLE_SAMPLE, stream_key
from .potential import Network, network, step_hit
from .rng import RngStream, uniform_array  # noqa: F401  (re-exported)
from .tree import CONTINUES, TreeError, WeightedTree, validate_Tw


class PathKind(str, Enum):
    RAW = "raw"
    LOOP_ERASED = "loop_erased"


class Terminal(str, Enum):
    HIT_ABSORBER = "hit_absorber"
    ESCAPED = "escaped"
    HORIZON = "horizon"


@dataclass(frozen=True)
class WalkPath:
    vertices: tuple[int, ...]
    kind: PathKind
    terminal: Terminal

    def __len__(self) -> int:
        return len(self.vertices)

    def ids(self, tree: WeightedTree) -> str:
        return " ".join(str(int(tree.ids[v])) for v in self.vertices)


# ---------------------------------------------------------------------------
# weights handed to the kernels


def srw_weights(tree: WeightedTree) -> np.ndarray:
    """Per neighbor slot: conductance 1/r of the connecting edge."""
    ptr, nbr, _ = tree.adjacency()
    rows = np.repeat(np.arange(tree.n), np.diff(ptr))
    edge = np.where(nbr == tree.parent[rows], rows, nbr)
    return 1.0 / tree.resistance[edge]


def lerw_weights(tree: WeightedTree, model: str = "shorted") -> np.ndarray:
    """Per neighbor slot: conductance to infinity through that neighbor."""
    net = network(tree, model)
    ptr, nbr, _ = tree.adjacency()
    rows = np.repeat(np.arange(tree.n), np.diff(ptr))
    return np.where(nbr == tree.parent[rows], net.up[rows], net.cond[nbr])


def _vkind(tree: WeightedTree) -> np.ndarray:
    return np.ascontiguousarray(tree.leaf_mode, dtype=np.int8)


# ---------------------------------------------------------------------------
# raw walks and loop erasure


def srw_path(tree: WeightedTree, start: int, absorbers: Iterable[int] = (), horizon: int = 1000,
             rng: RngStream | None = None) -> WalkPath:
    """Conductance-weighted walk from ``start`` until an absorber, a cutoff leaf or the horizon."""
    if not 0 <= start < tree.n:
        raise TreeError(f"vertex index {start} not in tree")
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    rng = rng or RngStream.derive(0)
    absorb = set(int(a) for a in absorbers)
    ptr, nbr, _ = tree.adjacency()
    w = srw_weights(tree)
    cum = [np.cumsum(w[ptr[v]:ptr[v + 1]]) for v in range(tree.n)] if tree.n <= 200_000 else None
    path = [start]
    v = start
    if v in absorb:
        return WalkPath((v,), PathKind.RAW, Terminal.HIT_ABSORBER)
    us = rng.uniforms(horizon)
    for u in us:
        c = cum[v] if cum is not None else np.cumsum(w[ptr[v]:ptr[v + 1]])
        j = min(int(np.searchsorted(c, u * c[-1], side="right")), len(c) - 1)
        v = int(nbr[ptr[v] + j])
        path.append(v)
        if v in absorb:
            return WalkPath(tuple(path), PathKind.RAW, Terminal.HIT_ABSORBER)
        if tree.leaf_mode[v] == CONTINUES:
            return WalkPath(tuple(path), PathKind.RAW, Terminal.ESCAPED)
    return WalkPath(tuple(path), PathKind.RAW, Terminal.HORIZON)


def loop_erase(path: WalkPath | Sequence[int]) -> WalkPath:
    """Chronological loop erasure."""
    if isinstance(path, WalkPath):
        if path.kind is not PathKind.RAW:
            raise ValueError("loop_erase expects a raw path")
        verts, term = path.vertices, path.terminal
    else:
        verts, term = tuple(path), Terminal.HORIZON
    if not verts:
        raise ValueError("empty path")
    stack: list[int] = []
    where: dict[int, int] = {}
    for v in verts:
        if v in where:
            k = where[v]
            for x in stack[k + 1:]:
                del where[x]
            del stack[k + 1:]
        else:
            where[v] = len(stack)
            stack.append(v)
    return WalkPath(tuple(stack), PathKind.LOOP_ERASED, term)


# ---------------------------------------------------------------------------
# closed-form transition laws


@dataclass(frozen=True)
class StepLaw:
    vertex: int
    came_from: int | None
    neighbors: tuple[int, ...]
    prob: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def as_dict(self) -> dict[int, float]:
        return dict(zip(self.neighbors, map(float, self.prob)))


def _interior(tree: WeightedTree, v: int) -> None:
    if not 0 <= v < tree.n:
        raise TreeError(f"vertex index {v} not in tree")
    if tree.n_children[v] == 0:
        raise TreeError(f"vertex {int(tree.ids[v])} is not interior")


def _eq_first(tree: WeightedTree, net: Network, v: int) -> np.ndarray:
    nb = tree.neighbors(v)
    terms = np.array([(1.0 - step_hit(tree, net, w, v)) / tree.edge_resistance(v, w) for w in nb])
    return terms / terms.sum()


def _eq_next(tree: WeightedTree, net: Network, v: int, i: int) -> np.ndarray:
    nb = tree.neighbors(v)
    vi = nb[i]
    terms = np.array([(1.0 - step_hit(tree, net, w, v)) / tree.edge_resistance(v, w) for w in nb])
    denom = (1.0 - step_hit(tree, net, v, vi)) * (
        1.0 / tree.edge_resistance(v, vi) + terms.sum() - terms[i])
    out = terms / denom
    out[i] = 0.0
    return out


def _corner_bounds(cs: np.ndarray, cu: np.ndarray, excl: int | None) -> tuple[np.ndarray, np.ndarray]:
    """Conservative bounds on C_j / sum_{k != excl} C_k from the two networks."""
    keep = np.ones(len(cs), bool)
    if excl is not None:
        keep[excl] = False
    ts, tu = cs[keep].sum(), cu[keep].sum()
    with np.errstate(invalid="ignore", divide="ignore"):
        lo = np.nan_to_num(cu / (cu + ts - cs))
        hi = np.nan_to_num(cs / (cs + tu - cu))
    lo[~keep] = 0.0
    hi[~keep] = 0.0
    return lo, np.minimum(hi, 1.0)


def _check_width(law: StepLaw, max_width: float | None) -> StepLaw:
    if max_width is not None and float((law.upper - law.lower).max()) > max_width:
        from .potential import BracketTooWide

        raise BracketTooWide(
            f"transition bracket at vertex {law.vertex} wider than {max_width:g}")
    return law


def lerw_first_step(tree: WeightedTree, v: int, max_width: float | None = None) -> StepLaw:
    """P_v(X_1 = v_i), from the hitting probabilities p(v_i, v) of the whole tree."""
    _interior(tree, v)
    S, U = network(tree, "shorted"), network(tree, "capped")
    prob = _eq_first(tree, S, v)
    lo, hi = _corner_bounds(S.branches(tree, v), U.branches(tree, v), None)
    law = StepLaw(v, None, tuple(tree.neighbors(v)), prob, lo, hi)
    return _check_width(law, max_width)


def lerw_next_step(tree: WeightedTree, v: int, came_from: int,
                   max_width: float | None = None) -> StepLaw:
    """P(X_{n+1} = v_i' | X_n = v, X_{n-1} = v_i); the entry for v_i is 0."""
    _interior(tree, v)
    nb = tree.neighbors(v)
    if came_from not in nb:
        raise TreeError(f"{int(tree.ids[came_from])} is not adjacent to {int(tree.ids[v])}")
    i = nb.index(came_from)
    S, U = network(tree, "shorted"), network(tree, "capped")
    prob = _eq_next(tree, S, v, i)
    lo, hi = _corner_bounds(S.branches(tree, v), U.branches(tree, v), i)
    law = StepLaw(v, came_from, tuple(nb), prob, lo, hi)
    return _check_width(law, max_width)


def markov_step(tree: WeightedTree, v: int, came_from: int | None = None,
                model: str = "shorted") -> np.ndarray:
    """Branch-conductance form of the same transition law."""
    c = network(tree, model).branches(tree, v).astype(float)
    if came_from is not None:
        c[tree.neighbors(v).index(came_from)] = 0.0
    return c / c.sum()


# ---------------------------------------------------------------------------
# samplers


def sample_lerw_markov(tree: WeightedTree, start: int, horizon: int = 10_000,
                       rng: RngStream | None = None, model: str = "shorted") -> WalkPath:
    """Loop-erased walk in Markov form, absorbed at the root or at a cutoff leaf."""
    if not 0 <= start < tree.n:
        raise TreeError(f"vertex index {start} not in tree")
    rng = rng or RngStream(0, stream_key(0, 0, start, 1, ROLE_SAMPLE))
    if start == 0:
        return WalkPath((0,), PathKind.LOOP_ERASED, Terminal.HIT_ABSORBER)
    ptr, nbr, slot = tree.adjacency()
    w = lerw_weights(tree, model)
    path = [start]
    v, excl = start, -1
    for _ in range(horizon):
        s = kernels.python_backend._choose(ptr, w, v, excl, rng.uniform())
        if s < 0:
            break
        d = int(nbr[ptr[v] + s])
        excl = int(slot[v]) if d == tree.parent[v] else 0
        v = d
        path.append(v)
        if v == 0:
            return WalkPath(tuple(path), PathKind.LOOP_ERASED, Terminal.HIT_ABSORBER)
        if tree.leaf_mode[v] == CONTINUES:
            return WalkPath(tuple(path), PathKind.LOOP_ERASED, Terminal.ESCAPED)
    return WalkPath(tuple(path), PathKind.LOOP_ERASED, Terminal.HORIZON)


def markov_prefixes(tree: WeightedTree, start: int, steps: int, nsamples: int, seed: int,
                    model: str = "shorted") -> np.ndarray:
    """``nsamples`` Markov-form prefixes of ``steps`` moves (rows padded with -1)."""
    ptr, nbr, slot = tree.adjacency()
    return kernels.lerw_markov_batch(ptr, nbr, lerw_weights(tree, model), tree.parent, slot,
                                     _vkind(tree), start, steps, seed, nsamples)


def erased_prefixes(tree: WeightedTree, start: int, steps: int, nsamples: int, seed: int,
                    max_len: int = 10_000_000) -> np.ndarray:
    """Prefixes of loop-erased raw walks run to a cutoff leaf and cut at the root."""
    ptr, nbr, _ = tree.adjacency()
    out, flag = kernels.erased_prefix_batch(ptr, nbr, srw_weights(tree), _vkind(tree), start,
                                            steps, seed, nsamples, max_len)
    if flag.any():
        raise RuntimeError(f"{int(flag.sum())} raw walks hit the length cap {max_len}")
    return out


def exact_prefix_law(tree: WeightedTree, start: int, steps: int,
                     model: str = "shorted") -> dict[tuple[int, ...], float]:
    """Exact law of the first ``steps`` moves of the Markov-form walk (stopping at the root)."""
    out: dict[tuple[int, ...], float] = {}
    net = network(tree, model)

    def grow(path: tuple[int, ...], p: float, prev: int | None) -> None:
        v = path[-1]
        if len(path) == steps + 1 or v == 0 or tree.leaf_mode[v] == CONTINUES:
            out[path] = out.get(path, 0.0) + p
            return
        c = net.branches(tree, v).astype(float)
        nb = tree.neighbors(v)
        if prev is not None:
            c[nb.index(prev)] = 0.0
        tot = c.sum()
        for w, cw in zip(nb, c):
            if cw > 0:
                grow(path + (w,), p * cw / tot, v)

    grow((start,), 1.0, None)
    return out


def empirical_law(rows: np.ndarray) -> dict[tuple[int, ...], float]:
    keys, counts = np.unique(rows, axis=0, return_counts=True)
    total = counts.sum()
    return {tuple(int(x) for x in k if x >= 0): c / total for k, c in zip(keys, counts)}


def total_variation(p: dict, q: dict) -> float:
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


@dataclass(frozen=True)
class XvalReport:
    start: int
    steps: int
    nsamples: int
    tv_between: float
    tv_markov_exact: float
    tv_erased_exact: float
    band: float
    passed: bool


def null_tv_band(law: dict, n: int, m: int, reps: int = 200, seed: int = 0,
                 sigmas: float = 3.0) -> float:
    """Mean + ``sigmas`` sd of the TV between two independent samples of sizes n, m from ``law``."""
    rng = np.random.default_rng(seed)
    p = np.array(list(law.values()))
    p = p / p.sum()
    a = rng.multinomial(n, p, size=reps) / n
    b = rng.multinomial(m, p, size=reps) / m
    tv = 0.5 * np.abs(a - b).sum(axis=1)
    return float(tv.mean() + sigmas * tv.std(ddof=1))


def lerw_xval(tree: WeightedTree, start: int, steps: int = 4, nsamples: int = 10**6,
              seed: int = 0) -> XvalReport:
    """Cross-validate the Markov-form sampler against erasure of raw walks."""
    law = exact_prefix_law(tree, start, steps)
    mk = empirical_law(markov_prefixes(tree, start, steps, nsamples, seed))
    er = empirical_law(erased_prefixes(tree, start, steps, nsamples, seed))
    tv = total_variation(mk, er)
    band = null_tv_band(law, nsamples, nsamples, seed=seed)
    return XvalReport(start, steps, nsamples, tv, total_variation(mk, law),
                      total_variation(er, law), band, tv < band)


# ---------------------------------------------------------------------------
# bound suite


@dataclass(frozen=True)
class TransitionBoundReport:
    params: tuple[int, int, float]
    bounds: tuple[float, float, float]  # first-step low, first-step high, conditional low
    depth_limit: int
    vertices: int
    triples: int
    violations: tuple[str, ...]
    uncertified: int
    first_min: float
    first_max: float
    next_min: float

    @property
    def ok(self) -> bool:
        return not self.violations and self.uncertified == 0


def transition_bounds(delta: int, Delta: int, r: float) -> tuple[float, float, float]:
    return 1.0 / (2 * Delta * r), r / (r + delta - 2), 1.0 / (2 * Delta * r * r)


def verify_transition_bounds(tree: WeightedTree, depth_limit: int | None = None,
                             params: tuple[int, int, float] | None = None,
                             tol: float = 1e-12) -> TransitionBoundReport:
    """Check every first-step and conditional transition mass against the degree/resistance bounds.

    A violation means the computed value itself breaks a bound.  A triple
    is uncertified when only the conservative bracket corner does.
    """
    if params is None:
        val = validate_Tw(tree)
        params = (val.delta, val.Delta, val.r)
    lo1, hi1, lo2 = transition_bounds(*params)
    limit = tree.max_depth - 1 if depth_limit is None else min(depth_limit, tree.max_depth - 1)
    S, U = network(tree, "shorted"), network(tree, "capped")
    sel = np.flatnonzero((tree.depth <= limit) & (tree.n_children > 0))
    deg = tree.n_children[sel] + (sel > 0)
    width = int(deg.max())
    CS = np.zeros((len(sel), width))
    CU = np.zeros((len(sel), width))
    mask = np.zeros((len(sel), width), bool)
    has_parent = sel > 0
    CS[has_parent, 0] = S.up[sel[has_parent]]
    CU[has_parent, 0] = U.up[sel[has_parent]]
    mask[has_parent, 0] = True
    off = has_parent.astype(np.int64)
    for j in range(width):
        rows = np.flatnonzero(tree.n_children[sel] > j)
        c = tree.first_child[sel[rows]] + j
        CS[rows, off[rows] + j] = S.cond[c]
        CU[rows, off[rows] + j] = U.cond[c]
        mask[rows, off[rows] + j] = True
    TS = CS.sum(1, keepdims=True)
    TU = CU.sum(1, keepdims=True)
    first = CS / TS
    with np.errstate(invalid="ignore", divide="ignore"):
        first_lo = CU / (CU + TS - CS)
        first_hi = CS / (CS + TU - CU)
    # conditional mass into i' after arriving from i: worst case removes the
    # smallest other branch from the normalizer
    big = np.where(mask, CS, np.inf)
    order = np.sort(big, axis=1)
    smallest, second = order[:, :1], order[:, 1:2]
    min_other = np.where(CS == smallest, second, smallest)
    next_point = CS / (TS - min_other)  # smallest conditional point value into i'
    with np.errstate(invalid="ignore", divide="ignore"):
        next_lo = CU / (CU + TS - CS - min_other)
    m = mask
    violations: list[str] = []

    def report(bad: np.ndarray, what: str, vals: np.ndarray) -> None:
        for rr, cc in zip(*np.nonzero(bad)):
            if len(violations) >= 50:
                return
            v = int(sel[rr])
            w = tree.neighbors(v)[cc]
            violations.append(f"{what} at vertex {int(tree.ids[v])} toward {int(tree.ids[w])}: "
                              f"{vals[rr, cc]:.6g}")

    bad1 = m & ((first < lo1 - tol) | (first > hi1 + tol))
    bad2 = m & (next_point < lo2 - tol)
    report(bad1, "first-step mass", first)
    report(bad2, "conditional mass", next_point)
    unc = (m & ~bad1 & ((first_lo < lo1 - tol) | (first_hi > hi1 + tol))) | (
        m & ~bad2 & (next_lo < lo2 - tol))
    triples = int((deg * (deg - 1)).sum())
    return TransitionBoundReport(
        params, (lo1, hi1, lo2), limit, len(sel), triples, tuple(violations), int(unc.sum()),
        float(first[m].min()), float(first[m].max()), float(next_point[m].min()),
    )
