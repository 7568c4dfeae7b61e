"""Electrical-network quantities on weighted trees.

Everything here is computed on a finite realization, so infinite-tree
quantities come as brackets.  Three boundary networks are used:

``grounded``
    every leaf is tied to infinity with zero resistance (loosest lower
    bound on resistance; only used for :func:`resistance_to_infinity`).
``shorted``
    cutoff leaves are tied to infinity, true leaves are dead ends.  This is
    the exact law of the finite-tree samplers, so it doubles as the point
    value.
``capped``
    cutoff leaves get the tail resistance ``r_max / (c_min - 1)``, the
    resistance of the sparsest continuation the observed degree and
    resistance ranges allow.  True leaves are dead ends.

Every resistance computed in ``shorted`` is a lower bound and every one in
``capped`` an upper bound, provided the unseen part of the tree stays in
the observed class.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import sparse

from .tree import CONTINUES, TRUE_LEAF, TreeError, WeightedTree

MODELS = ("grounded", "shorted", "capped")
DEFAULT_MARGIN = 10


class BracketTooWide(ValueError):
    """A bracket is too wide to certify the requested statement."""


@dataclass(frozen=True)
class Network:
    """Branch conductances of one boundary network.

    ``down[v]``   resistance from v to infinity inside T(v)
    ``cond[v]``   conductance of the edge into v in series with ``down[v]``
    ``gch[v]``    sum of ``cond`` over the children of v
    ``up[v]``     conductance of the branch leaving v through its parent
    """

    model: str
    down: np.ndarray
    cond: np.ndarray
    gch: np.ndarray
    up: np.ndarray
    tail: float

    def total(self, v: int) -> float:
        return float(self.up[v] + self.gch[v])

    def branch(self, tree: WeightedTree, v: int, w: int) -> float:
        """Conductance from v to infinity through its neighbor w."""
        if w == tree.parent[v]:
            return float(self.up[v])
        if v >= 0 and tree.parent[w] == v:
            return float(self.cond[w])
        raise TreeError(f"{int(tree.ids[w])} is not a neighbor of {int(tree.ids[v])}")

    def branches(self, tree: WeightedTree, v: int) -> np.ndarray:
        """Branch conductances at v in neighbor-slot order."""
        kids = self.cond[tree.children(v).start:tree.children(v).stop]
        if v == 0:
            return kids.copy()
        return np.concatenate(([self.up[v]], kids))


def capped_tail(tree: WeightedTree) -> float:
    """Tail resistance for cutoff leaves in the capped network."""
    nonroot_interior = tree.n_children[1:][tree.n_children[1:] > 0]
    if len(nonroot_interior) == 0:
        return math.inf
    c_min = int(nonroot_interior.min())
    if c_min < 2:
        return math.inf
    return float(tree.resistance[1:].max()) / (c_min - 1)


def network(tree: WeightedTree, model: str = "shorted") -> Network:
    """Boundary network ``model`` for ``tree`` (memoized on the tree)."""
    if model not in MODELS:
        raise ValueError(f"unknown boundary model {model!r}")
    cache = tree.__dict__.get("_networks")
    if cache is None:
        cache = {}
        object.__setattr__(tree, "_networks", cache)
    net = cache.get(model)
    if net is None:
        net = _build_network(tree, model)
        cache[model] = net
    return net


def _build_network(tree: WeightedTree, model: str) -> Network:
    n = tree.n
    tail = capped_tail(tree) if model == "capped" else 0.0
    down = np.empty(n)
    cond = np.zeros(n)
    gch = np.zeros(n)
    mode = tree.leaf_mode
    down[mode == CONTINUES] = tail
    down[mode == TRUE_LEAF] = 0.0 if model == "grounded" else math.inf
    res = tree.resistance
    with np.errstate(divide="ignore"):
        for d in range(tree.max_depth, -1, -1):
            lo, hi = tree.level_start[d], tree.level_start[d + 1]
            if d < tree.max_depth:
                clo, chi = tree.level_start[d + 1], tree.level_start[d + 2]
                gch[lo:hi] = np.bincount(tree.parent[clo:chi] - lo, weights=cond[clo:chi],
                                         minlength=hi - lo)
                inner = np.arange(lo, hi)[tree.n_children[lo:hi] > 0]
                down[inner] = 1.0 / gch[inner]
            if d > 0:
                cond[lo:hi] = 1.0 / (res[lo:hi] + down[lo:hi])
    up = np.zeros(n)
    for d in range(1, tree.max_depth + 1):
        lo, hi = tree.level_start[d], tree.level_start[d + 1]
        p = tree.parent[lo:hi]
        other = np.maximum(up[p] + gch[p] - cond[lo:hi], 0.0)
        up[lo:hi] = other / (res[lo:hi] * other + 1.0)
    for arr in (down, cond, gch, up):
        arr.setflags(write=False)
    return Network(model, down, cond, gch, up, tail)


def subtree_up(tree: WeightedTree, net: Network, top: int) -> dict[int, np.ndarray]:
    """Up-branch conductances restricted to T(top), keyed by level offset.

    Entry ``k`` covers ``tree.descendants_at(top, k)`` in index order.
    """
    out = {0: np.zeros(1)}
    k = 0
    prev = tree.descendants_at(top, 0)
    while True:
        cur = tree.descendants_at(top, k + 1)
        if len(cur) == 0:
            return out
        p = tree.parent[cur.start:cur.stop]
        pu = out[k][p - prev.start]
        other = np.maximum(pu + net.gch[p] - net.cond[cur.start:cur.stop], 0.0)
        out[k + 1] = other / (tree.resistance[cur.start:cur.stop] * other + 1.0)
        prev = cur
        k += 1


# ---------------------------------------------------------------------------
# resistance


@dataclass(frozen=True)
class ResistanceBracket:
    lower: float
    upper: float
    depth: int

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def contains(self, x: float, tol: float = 0.0) -> bool:
        return self.lower - tol <= x <= self.upper + tol


def _check_query_vertex(tree: WeightedTree, v: int) -> None:
    if not 0 <= v < tree.n:
        raise TreeError(f"vertex index {v} not in tree")
    if tree.leaf_mode[v] == CONTINUES:
        raise TreeError(f"vertex {int(tree.ids[v])} is a cutoff leaf")


def _inv(g: float) -> float:
    return math.inf if g <= 0.0 else 1.0 / g


def resistance_to_infinity(tree: WeightedTree, v: int,
                           excluded_neighbor: int | None = None) -> ResistanceBracket:
    """Effective resistance from v to infinity, optionally with one neighbor's branch removed."""
    _check_query_vertex(tree, v)
    vals = []
    for model in ("grounded", "capped"):
        net = network(tree, model)
        g = net.total(v)
        if excluded_neighbor is not None:
            g -= net.branch(tree, v, excluded_neighbor)
        vals.append(_inv(max(g, 0.0)))
    return ResistanceBracket(vals[0], vals[1], tree.depth_cutoff)


def branch_resistance(tree: WeightedTree, v: int, neighbor: int) -> ResistanceBracket:
    """Resistance from v to infinity in the component keeping only the edge to ``neighbor``."""
    _check_query_vertex(tree, v)
    vals = [_inv(network(tree, m).branch(tree, v, neighbor)) for m in ("grounded", "capped")]
    return ResistanceBracket(vals[0], vals[1], tree.depth_cutoff)


def write_resistance_csv(tree: WeightedTree, vertices: Sequence[int], path: str | Path,
                         header: str = "") -> None:
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(header)
        w = csv.writer(fh)
        w.writerow(["vertex", "lower", "upper", "depth"])
        for v in vertices:
            b = resistance_to_infinity(tree, v)
            w.writerow([int(tree.ids[v]), repr(b.lower), repr(b.upper), b.depth])


# ---------------------------------------------------------------------------
# hitting probabilities


@dataclass(frozen=True)
class ProbabilityBracket:
    lower: float
    value: float
    upper: float

    def contains(self, x: float, tol: float = 0.0) -> bool:
        return self.lower - tol <= x <= self.upper + tol


def tree_path(tree: WeightedTree, a: int, b: int) -> list[int]:
    pa, pb = tree.path_to_root(a), tree.path_to_root(b)
    on_b = set(pb)
    up = []
    for x in pa:
        up.append(x)
        if x in on_b:
            lca = x
            break
    down = pb[: pb.index(lca)]
    return up + down[::-1]


def step_hit(tree: WeightedTree, net: Network, x: int, y: int) -> float:
    """P(walk from x ever hits the neighbor y)."""
    avoid = max(net.total(x) - net.branch(tree, x, y), 0.0)
    return 1.0 / (1.0 + tree.edge_resistance(x, y) * avoid)


def hitting_probability(tree: WeightedTree, a: int, b: int) -> ProbabilityBracket:
    """p(a, b) for the conductance-weighted walk on the whole tree."""
    if a == b:
        raise ValueError("hitting probability needs distinct vertices")
    for x in (a, b):
        if not 0 <= x < tree.n:
            raise TreeError(f"vertex index {x} not in tree")
    path = tree_path(tree, a, b)
    out = []
    for model in ("shorted", "capped"):
        net = network(tree, model)
        p = 1.0
        for x, y in zip(path, path[1:]):
            p *= step_hit(tree, net, x, y)
        out.append(p)
    # more conductance toward infinity lowers every hitting probability
    return ProbabilityBracket(out[0], out[0], out[1])


# ---------------------------------------------------------------------------
# harmonic measure


@dataclass(frozen=True)
class HarmonicMeasure:
    base: int
    level: int
    vertices: np.ndarray
    mass: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    residual: float

    def as_dict(self) -> dict[int, float]:
        return {int(v): float(m) for v, m in zip(self.vertices, self.mass)}


def _check_margin(tree: WeightedTree, v: int, n: int, margin: int) -> None:
    if n < 0:
        raise ValueError("level must be nonnegative")
    avail = tree.max_depth - int(tree.depth[v])
    if n > avail - margin:
        raise BracketTooWide(
            f"level {n} below vertex {int(tree.ids[v])} leaves fewer than {margin} levels "
            f"before the cutoff ({avail} available)"
        )


def harmonic_measure(tree: WeightedTree, v: int, n: int,
                     margin: int = DEFAULT_MARGIN) -> HarmonicMeasure:
    """Law of the level-n vertex of T(v) crossed by loop-erased walk from v in T(v)."""
    _check_margin(tree, v, n, margin)
    S, U = network(tree, "shorted"), network(tree, "capped")
    mass = np.ones(1)
    lo_m = np.ones(1)
    hi_m = np.ones(1)
    prev = tree.descendants_at(v, 0)
    for k in range(1, n + 1):
        cur = tree.descendants_at(v, k)
        idx = np.arange(cur.start, cur.stop)
        p = tree.parent[idx]
        pi = p - prev.start
        with np.errstate(invalid="ignore", divide="ignore"):
            share = np.nan_to_num(S.cond[idx] / S.gch[p])
            lo = np.nan_to_num(U.cond[idx] / (U.cond[idx] + S.gch[p] - S.cond[idx]))
            hi = np.nan_to_num(S.cond[idx] / (S.cond[idx] + U.gch[p] - U.cond[idx]))
        mass = mass[pi] * share
        lo_m = lo_m[pi] * lo
        hi_m = hi_m[pi] * np.minimum(hi, 1.0)
        prev = cur
    verts = np.arange(prev.start, prev.stop) if n else np.array([v])
    residual = max(0.0, 1.0 - float(mass.sum()))
    return HarmonicMeasure(v, n, verts, mass, lo_m, hi_m, residual)


def harmonic_measure_dual(tree: WeightedTree, v: int, n: int,
                          margin: int = DEFAULT_MARGIN) -> np.ndarray:
    """Same masses as :func:`harmonic_measure`, built as p~(v,u) * p~(u, infinity)."""
    _check_margin(tree, v, n, margin)
    S = network(tree, "shorted")
    ups = subtree_up(tree, S, v)
    hit = np.ones(1)
    prev = tree.descendants_at(v, 0)
    b = None
    for k in range(1, n + 1):
        cur = tree.descendants_at(v, k)
        idx = np.arange(cur.start, cur.stop)
        p = tree.parent[idx]
        pi = p - prev.start
        # from the parent, walking in T(v), hit this child
        avoid = np.maximum(ups[k - 1][pi] + S.gch[p] - S.cond[idx], 0.0)
        b = 1.0 / (1.0 + tree.resistance[idx] * avoid)
        hit = hit[pi] * b
        prev = cur
    idx = np.arange(prev.start, prev.stop)
    if n == 0:
        return np.ones(1) if S.gch[v] > 0 else np.zeros(1)
    a = 1.0 / (1.0 + tree.resistance[idx] * S.gch[idx])
    escape = (1.0 - a) / (1.0 - a * b)
    return hit * escape


def write_harm_csv(measure: HarmonicMeasure, tree: WeightedTree, path: str | Path,
                   header: str = "") -> None:
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(header)
        w = csv.writer(fh)
        w.writerow(["vertex", "mass"])
        for v, m in zip(measure.vertices, measure.mass):
            w.writerow([int(tree.ids[v]), repr(float(m))])


# ---------------------------------------------------------------------------
# spherically symmetric trees


@dataclass(frozen=True)
class LevelProfile:
    """Spherically symmetric tree described level by level.

    ``children[k]`` is the child count of every level-k vertex and
    ``resistance[k]`` the resistance of edges from level k-1 to level k
    (``resistance[0]`` is unused).  Level ``len(children)`` is the cutoff.
    """

    children: tuple[int, ...]
    resistance: tuple[float, ...]

    @classmethod
    def regular(cls, d: int, depth: int, r: float = 1.0) -> "LevelProfile":
        if d < 2:
            raise TreeError("regular(d) requires d >= 2")
        return cls((d,) + (d - 1,) * (depth - 1), (0.0,) + (float(r),) * depth)

    @classmethod
    def kary(cls, k: int, depth: int, r: float = 1.0) -> "LevelProfile":
        return cls((k,) * depth, (0.0,) + (float(r),) * depth)

    @classmethod
    def of_tree(cls, tree: WeightedTree) -> "LevelProfile":
        """Profile of a tree that is spherically symmetric; raises otherwise."""
        kids, res = [], [0.0]
        for d in range(tree.max_depth):
            lv = tree.level(d)
            c = tree.n_children[lv.start:lv.stop]
            if c.min() != c.max():
                raise TreeError(f"level {d} is not symmetric")
            kids.append(int(c[0]))
            nxt = tree.level(d + 1)
            r = tree.resistance[nxt.start:nxt.stop]
            if r.min() != r.max():
                raise TreeError(f"edges into level {d + 1} have unequal resistances")
            res.append(float(r[0]))
        if np.any(tree.leaf_mode[tree.level_start[-2]:] != CONTINUES):
            raise TreeError("profile trees end in cutoff leaves")
        return cls(tuple(kids), tuple(res))

    @property
    def depth(self) -> int:
        return len(self.children)

    def level_sizes(self) -> list[int]:
        out = [1]
        for c in self.children:
            out.append(out[-1] * c)
        return out

    def tail(self, model: str) -> float:
        if model != "capped":
            return 0.0
        inner = self.children[1:]
        if not inner or min(inner) < 2:
            return math.inf
        return max(self.resistance[1:]) / (min(inner) - 1)

    def down_resistance(self, model: str) -> np.ndarray:
        """R_k: resistance from a level-k vertex to infinity inside its subtree."""
        R = np.empty(self.depth + 1)
        R[self.depth] = self.tail(model)
        for k in range(self.depth - 1, -1, -1):
            R[k] = (self.resistance[k + 1] + R[k + 1]) / self.children[k]
        return R

    def branch_resistance(self, level: int) -> ResistanceBracket:
        """Resistance through one child edge of a level-``level`` vertex."""
        vals = []
        for model in ("shorted", "capped"):
            R = self.down_resistance(model)
            vals.append(float(self.resistance[level + 1] + R[level + 1]))
        return ResistanceBracket(vals[0], vals[1], self.depth)

    def resistance_to_infinity(self, level: int = 0) -> ResistanceBracket:
        lo, hi = (self.down_resistance(m)[level] for m in ("shorted", "capped"))
        return ResistanceBracket(float(lo), float(hi), self.depth)

    def walk_probabilities(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-level probabilities of stepping up and down for the weighted walk."""
        up = np.zeros(self.depth + 1)
        downp = np.zeros(self.depth + 1)
        for k in range(self.depth):
            gd = self.children[k] / self.resistance[k + 1]
            gu = 0.0 if k == 0 else 1.0 / self.resistance[k]
            up[k] = gu / (gu + gd)
            downp[k] = gd / (gu + gd)
        return up, downp


# ---------------------------------------------------------------------------
# return probabilities and spectral radius


def _transition_matrix(tree: WeightedTree) -> sparse.csr_matrix:
    """Column-stochastic-transposed kernel: row v holds P(v -> .), cutoff leaves killed."""
    n = tree.n
    ptr, nbr, _ = tree.adjacency()
    rows = np.repeat(np.arange(n), np.diff(ptr))
    # conductance of each neighbor slot is 1/r of the connecting edge
    child_edge = np.where(nbr == tree.parent[rows], rows, nbr)
    w = 1.0 / tree.resistance[child_edge]
    w[tree.leaf_mode[rows] == CONTINUES] = 0.0
    tot = np.bincount(rows, weights=w, minlength=n)
    with np.errstate(invalid="ignore", divide="ignore"):
        w = np.nan_to_num(w / tot[rows])
    return sparse.csr_matrix((w, (rows, nbr)), shape=(n, n))


def root_occupation(tree: WeightedTree | LevelProfile, steps: int) -> np.ndarray:
    """P(Y_t = root) for t = 0..steps, walk killed on reaching a cutoff leaf."""
    out = np.zeros(steps + 1)
    if isinstance(tree, LevelProfile):
        up, dn = tree.walk_probabilities()
        x = np.zeros(tree.depth + 1)
        x[0] = 1.0
        out[0] = 1.0
        for t in range(1, steps + 1):
            y = np.zeros_like(x)
            y[:-1] += x[1:] * up[1:]
            y[1:] += x[:-1] * dn[:-1]
            y[-1] = 0.0 if tree.depth > 0 else y[-1]
            x = y
            out[t] = x[0]
        return out
    PT = _transition_matrix(tree).T.tocsr()
    x = np.zeros(tree.n)
    x[0] = 1.0
    out[0] = 1.0
    for t in range(1, steps + 1):
        x = PT @ x
        out[t] = x[0]
    return out


def expected_root_visits(tree: WeightedTree | LevelProfile, horizon: int) -> float:
    """Expected landings on the root during steps 1..horizon for one walker."""
    return float(root_occupation(tree, horizon)[1:].sum())


@dataclass(frozen=True)
class SpectralEstimate:
    return_probs: np.ndarray  # P(Y_2n = root), n = 1..N
    rho_lower: float  # max_n P_2n^(1/2n): certified lower bound on rho
    rho_estimate: float  # fitted extrapolation
    rho_upper: float  # fit plus window disagreement (not certified)
    fit_window: tuple[int, int]

    @property
    def bracket(self) -> tuple[float, float]:
        return self.rho_lower, self.rho_upper


def _fit_rho(logp: np.ndarray, lo: int, hi: int) -> float:
    n = np.arange(lo, hi + 1, dtype=float)
    A = np.column_stack([np.ones_like(n), np.log(n), n])
    coef, *_ = np.linalg.lstsq(A, logp[lo - 1:hi], rcond=None)
    return float(np.exp(coef[2] / 2.0))


def return_probability_sequence(tree: WeightedTree | LevelProfile, N: int) -> SpectralEstimate:
    depth = tree.depth if isinstance(tree, LevelProfile) else tree.max_depth
    if depth < N:
        raise BracketTooWide(f"depth {depth} < N = {N}: the walk could feel the cutoff")
    if N < 8:
        raise ValueError("need N >= 8 for the extrapolation window")
    occ = root_occupation(tree, 2 * N)
    p2n = occ[2::2].copy()
    pos = p2n > 0
    ns = np.arange(1, N + 1)
    roots = np.where(pos, np.power(np.where(pos, p2n, 1.0), 1.0 / (2 * ns)), 0.0)
    lower = float(roots.max())
    with np.errstate(divide="ignore"):
        logp = np.log(p2n)
    half, quarter = N // 2, N // 4
    fit = _fit_rho(logp, half, N)
    fit2 = _fit_rho(logp, quarter, half)
    upper = min(1.0, max(fit, lower) + abs(fit - fit2))
    return SpectralEstimate(p2n, lower, fit, upper, (half, N))


def write_rho_csv(est: SpectralEstimate, path: str | Path, header: str = "") -> None:
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(header)
        w = csv.writer(fh)
        w.writerow(["n", "p2n", "root_estimate"])
        for i, p in enumerate(est.return_probs, 1):
            w.writerow([i, repr(float(p)), repr(float(p) ** (1.0 / (2 * i)) if p > 0 else 0.0)])


# ---------------------------------------------------------------------------
# harmonic measure vs return probability


@dataclass(frozen=True)
class HarmReturnReport:
    base: int
    level: int
    min_ratio: float
    max_ratio: float
    argmin: int
    floor: float
    certified: bool
    note: str = ""


def harm_return_floor(delta: int, Delta: int, r: float) -> float:
    """Constructive lower bound on p0(u) / HARM_{T(v)}(u) for v on level 2."""
    conductance_ratio = (delta - 1) / (r * Delta)
    no_return = (delta - 2) / (r * (Delta - 1))
    escape = 1.0 / (4 * Delta**2 * r**3)
    return conductance_ratio * no_return * escape


def _harm_mass(tree: WeightedTree, v: int, n: int, net: Network) -> np.ndarray:
    mass = np.ones(1)
    prev = tree.descendants_at(v, 0)
    for k in range(1, n + 1):
        cur = tree.descendants_at(v, k)
        p = tree.parent[cur.start:cur.stop]
        with np.errstate(invalid="ignore", divide="ignore"):
            mass = mass[p - prev.start] * np.nan_to_num(net.cond[cur.start:cur.stop] / net.gch[p])
        prev = cur
    return mass


def verify_harm_return_comparison(tree: WeightedTree, v: int, n: int,
                                  margin: int = DEFAULT_MARGIN,
                                  params: tuple[int, int, float] | None = None) -> HarmReturnReport:
    """Compare p0(u) with HARM_{T(v)}(u) over level n of T(v) against the constructive floor.

    The ratio is evaluated in both the shorted and the capped network; the
    floor counts as certified only when both clear it.
    """
    if tree.depth[v] != 2:
        raise ValueError("the comparison is stated for level-2 vertices")
    from .tree import validate_Tw

    if params is None:
        val = validate_Tw(tree)
        params = (val.delta, val.Delta, val.r)
    floor = harm_return_floor(*params)
    hm = harmonic_measure(tree, v, n, margin)
    ratio = p0_probability(tree, hm.vertices, v, "shorted") / hm.mass
    capped = p0_probability(tree, hm.vertices, v, "capped") / _harm_mass(
        tree, v, n, network(tree, "capped"))
    i = int(np.argmin(ratio))
    certified = bool(min(ratio.min(), capped.min()) > floor)
    note = "" if certified else "one boundary network falls below the floor"
    return HarmReturnReport(v, n, float(ratio.min()), float(ratio.max()),
                            int(tree.ids[hm.vertices[i]]), floor, certified, note)


def p0_probability(tree: WeightedTree, us: np.ndarray, v: int, model: str = "shorted") -> np.ndarray:
    """p0(u) = p(u, v) * p(v, -infinity) for u in T(v), v on level 2."""
    net = network(tree, model)
    w = int(tree.parent[v])
    # loop-erased walk from v: step to the parent, then to the root
    bv = net.branches(tree, v)
    first = bv[0] / bv.sum()
    bw = net.branches(tree, w)
    slot_v = tree.neighbors(w).index(v)
    second = bw[0] / (bw.sum() - bw[slot_v])
    esc = first * second
    out = np.empty(len(us))
    for i, u in enumerate(us):
        p = 1.0
        x = int(u)
        while x != v:
            y = int(tree.parent[x])
            p *= step_hit(tree, net, x, y)
            x = y
        out[i] = p
    return out * esc


def p0_via_root(tree: WeightedTree, u: int, model: str = "shorted") -> float:
    """p0(u) = p(u, root) * P(walk from the root escapes away from u's branch)."""
    net = network(tree, model)
    p = 1.0
    x = u
    while x != 0:
        y = int(tree.parent[x])
        p *= step_hit(tree, net, x, y)
        top = x
        x = y
    br = net.branches(tree, 0)
    j = tree.neighbors(0).index(top)
    return p * (br.sum() - br[j]) / br.sum()
