"""Weighted rooted trees: construction, validation and structural analysis.

Trees are stored in breadth-first order with index 0 as the root, so the
children of every vertex occupy a contiguous index range and the
descendants of a vertex on any fixed level are contiguous too.  External
vertex ids (unsigned 64-bit) are kept separately for I/O.

Finite realizations stand in for infinite trees.  Every leaf carries a
boundary flag: ``CONTINUES`` (the tree goes on past the depth cutoff) or
``TRUE_LEAF`` (a genuine dead end).
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

INTERIOR = 0
CONTINUES = 1
TRUE_LEAF = 2

DEFAULT_VERTEX_BUDGET = 10**7


class TreeError(ValueError):
    """Malformed tree, tree file or tree specification."""


class BudgetExceeded(TreeError):
    """Materializing the requested tree would exceed the vertex budget."""


@dataclass(frozen=True, eq=False)
class WeightedTree:
    """Immutable finite realization of a rooted tree with edge resistances.

    ``resistance[v]`` is the resistance of the edge from ``v`` to its parent
    (0 for the root).  ``leaf_mode[v]`` is ``INTERIOR`` for vertices with
    children, otherwise ``CONTINUES`` or ``TRUE_LEAF``.
    """

    parent: np.ndarray
    resistance: np.ndarray
    leaf_mode: np.ndarray
    ids: np.ndarray
    depth_cutoff: int
    tag: str = "tree"
    first_child: np.ndarray = field(init=False, repr=False)
    n_children: np.ndarray = field(init=False, repr=False)
    depth: np.ndarray = field(init=False, repr=False)
    level_start: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        parent = np.ascontiguousarray(self.parent, dtype=np.int64)
        n = len(parent)
        if n == 0 or parent[0] != -1 or (n > 1 and np.any(parent[1:] < 0)):
            raise TreeError("vertex 0 must be the unique root")
        if n > 1 and (np.any(np.diff(parent[1:]) < 0) or np.any(parent[1:] >= np.arange(1, n))):
            raise TreeError("vertices are not in breadth-first order")
        n_children = np.bincount(parent[1:], minlength=n).astype(np.int64)
        first_child = np.ones(n, np.int64)
        first_child[1:] = 1 + np.cumsum(n_children)[:-1]
        depth = np.zeros(n, np.int64)
        # levels are contiguous index ranges; walk them top-down
        if n > 1:
            frontier_lo, frontier_hi, d = 0, 1, 0
            while frontier_hi < n:
                lo = int(first_child[frontier_lo]) if frontier_lo < n else n
                hi = int(first_child[frontier_hi - 1] + n_children[frontier_hi - 1])
                if hi <= lo:
                    break
                d += 1
                depth[lo:hi] = d
                frontier_lo, frontier_hi = lo, hi
        level_start = np.searchsorted(depth, np.arange(int(depth.max()) + 2)).astype(np.int64)
        resistance = np.ascontiguousarray(self.resistance, dtype=np.float64)
        leaf_mode = np.ascontiguousarray(self.leaf_mode, dtype=np.int8)
        ids = np.ascontiguousarray(self.ids, dtype=np.uint64)
        if not (len(resistance) == len(leaf_mode) == len(ids) == n):
            raise TreeError("array lengths disagree")
        interior = n_children > 0
        if np.any(leaf_mode[interior] != INTERIOR) or np.any(leaf_mode[~interior] == INTERIOR):
            raise TreeError("leaf_mode must be INTERIOR exactly on vertices with children")
        for name, arr in (
            ("parent", parent), ("resistance", resistance), ("leaf_mode", leaf_mode), ("ids", ids),
            ("first_child", first_child), ("n_children", n_children), ("depth", depth),
            ("level_start", level_start),
        ):
            arr = arr.copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    # basic structure -----------------------------------------------------
    @property
    def n(self) -> int:
        return len(self.parent)

    @property
    def max_depth(self) -> int:
        return int(self.depth[-1])

    def children(self, v: int) -> range:
        s = int(self.first_child[v])
        return range(s, s + int(self.n_children[v]))

    def neighbors(self, v: int) -> list[int]:
        """Neighbor slots in canonical order: parent first (if any), then children."""
        out = [] if v == 0 else [int(self.parent[v])]
        out.extend(self.children(v))
        return out

    def degree(self, v: int) -> int:
        return int(self.n_children[v]) + (0 if v == 0 else 1)

    def level(self, d: int) -> range:
        if d < 0 or d + 1 >= len(self.level_start):
            return range(0)
        return range(int(self.level_start[d]), int(self.level_start[d + 1]))

    def level_sizes(self) -> list[int]:
        return [int(x) for x in np.diff(self.level_start)]

    def descendants_at(self, v: int, k: int) -> range:
        """Vertices of T(v) exactly ``k`` levels below ``v`` (a contiguous range)."""
        lo, hi = v, v + 1
        for _ in range(k):
            if lo >= hi:
                return range(0)
            nlo = int(self.first_child[lo])
            nhi = int(self.first_child[hi - 1] + self.n_children[hi - 1])
            lo, hi = nlo, nhi
        return range(lo, hi)

    def path_to_root(self, v: int) -> list[int]:
        out = [v]
        while v != 0:
            v = int(self.parent[v])
            out.append(v)
        return out

    def is_ancestor(self, a: int, v: int) -> bool:
        """True when ``a`` lies on the path from ``v`` to the root (inclusive)."""
        while self.depth[v] > self.depth[a]:
            v = int(self.parent[v])
        return v == a

    def edge_resistance(self, a: int, b: int) -> float:
        if self.parent[b] == a:
            return float(self.resistance[b])
        if self.parent[a] == b:
            return float(self.resistance[a])
        raise TreeError(f"vertices {self.ids[a]} and {self.ids[b]} are not adjacent")

    def index_of(self, vertex_id: int) -> int:
        lookup = self._id_lookup()
        try:
            return lookup[int(vertex_id)]
        except KeyError:
            raise TreeError(f"no vertex with id {vertex_id}") from None

    def _id_lookup(self) -> dict[int, int]:
        cached = self.__dict__.get("_lookup")
        if cached is None:
            cached = {int(x): i for i, x in enumerate(self.ids)}
            object.__setattr__(self, "_lookup", cached)
        return cached

    @property
    def meta(self) -> tuple[int, int, float]:
        """Observed (min degree, max degree, max resistance) over interior vertices."""
        interior = self.n_children > 0
        deg = self.n_children + (np.arange(self.n) > 0)
        if not interior.any():
            return (0, 0, 0.0)
        r = float(self.resistance[1:].max()) if self.n > 1 else 0.0
        return int(deg[interior].min()), int(deg[interior].max()), r

    def subtree(self, v: int) -> "WeightedTree":
        """T(v): the descendant tree of ``v`` re-rooted at ``v`` (ids preserved)."""
        blocks = []
        k = 0
        while True:
            rng = self.descendants_at(v, k)
            if len(rng) == 0:
                break
            blocks.append(np.arange(rng.start, rng.stop))
            k += 1
        idx = np.concatenate(blocks)
        remap = np.full(self.n, -1, np.int64)
        remap[idx] = np.arange(len(idx))
        parent = np.empty(len(idx), np.int64)
        parent[0] = -1
        parent[1:] = remap[self.parent[idx[1:]]]
        res = self.resistance[idx].copy()
        res[0] = 0.0
        return WeightedTree(parent, res, self.leaf_mode[idx], self.ids[idx],
                            depth_cutoff=self.depth_cutoff - int(self.depth[v]),
                            tag=f"{self.tag}/sub{int(self.ids[v])}")

    def with_resistance(self, resistance: np.ndarray, tag: str | None = None) -> "WeightedTree":
        return WeightedTree(self.parent, resistance, self.leaf_mode, self.ids, self.depth_cutoff,
                            tag or self.tag)

    def same_as(self, other: "WeightedTree") -> bool:
        return (
            self.n == other.n
            and np.array_equal(self.parent, other.parent)
            and np.array_equal(self.resistance, other.resistance)
            and np.array_equal(self.leaf_mode, other.leaf_mode)
            and np.array_equal(self.ids, other.ids)
        )

    # neighbor tables used by the samplers -------------------------------------
    def adjacency(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """CSR neighbor table (parent slot first) and each vertex's slot in its parent's list."""
        cached = self.__dict__.get("_adjacency")
        if cached is not None:
            return cached
        n = self.n
        deg = self.n_children + (np.arange(n) > 0)
        ptr = np.zeros(n + 1, np.int64)
        ptr[1:] = np.cumsum(deg)
        nbr = np.empty(int(ptr[-1]), np.int64)
        has_parent = np.arange(n) > 0
        nbr[ptr[:-1][has_parent]] = self.parent[has_parent]
        # children occupy the slots after the parent slot
        child = np.arange(1, n)
        p = self.parent[1:]
        rank = child - self.first_child[p]
        offset = (p > 0).astype(np.int64)
        nbr[ptr[p] + offset + rank] = child
        slot = np.zeros(n, np.int64)
        slot[1:] = offset + rank
        for arr in (ptr, nbr, slot):
            arr.setflags(write=False)
        cached = (ptr, nbr, slot)
        object.__setattr__(self, "_adjacency", cached)
        return cached


def from_edges(root: int, edges: Iterable[tuple[int, int, float]],
               leaf_modes: dict[int, int] | None = None, default_leaf: int = TRUE_LEAF,
               depth_cutoff: int | None = None, tag: str = "tree") -> WeightedTree:
    """Assemble a tree from (parent id, child id, resistance) triples.

    Child order is the order in which edges are listed.
    """
    kids: dict[int, list[tuple[int, float]]] = {}
    seen_child: set[int] = set()
    count = 0
    for p, c, r in edges:
        if c in seen_child:
            raise TreeError(f"vertex {c} has two parents")
        if c == root:
            raise TreeError("root cannot be a child")
        seen_child.add(c)
        kids.setdefault(p, []).append((c, float(r)))
        count += 1
    order = [root]
    parent = [-1]
    res = [0.0]
    pos = {root: 0}
    q = deque([root])
    while q:
        u = q.popleft()
        for c, r in kids.get(u, ()):
            if c in pos:
                raise TreeError(f"cycle through vertex {c}")
            pos[c] = len(order)
            order.append(c)
            parent.append(pos[u])
            res.append(r)
            q.append(c)
    if len(order) != count + 1:
        raise TreeError("edges do not form a single tree hanging from the root")
    leaf_modes = leaf_modes or {}
    has_kids = set(kids)
    mode = np.array([INTERIOR if v in has_kids else leaf_modes.get(v, default_leaf) for v in order],
                    np.int8)
    tree = WeightedTree(np.array(parent), np.array(res), mode, np.array(order, np.uint64),
                        depth_cutoff=0, tag=tag)
    cutoff = tree.max_depth if depth_cutoff is None else depth_cutoff
    return WeightedTree(tree.parent, tree.resistance, tree.leaf_mode, tree.ids, cutoff, tag)


def _from_child_counts(levels: Sequence[np.ndarray], resistance: float | Sequence[float],
                       depth: int, tag: str) -> WeightedTree:
    """Build from per-level arrays of child counts (level k array has one entry per level-k vertex)."""
    parent = [np.array([-1], np.int64)]
    start = 0
    for counts in levels:
        counts = np.asarray(counts, np.int64)
        idx = np.arange(start, start + len(counts))
        parent.append(np.repeat(idx, counts))
        start += len(counts)
    parent_arr = np.concatenate(parent)
    n = len(parent_arr)
    if np.isscalar(resistance):
        res = np.full(n, float(resistance))
    else:
        res = np.asarray(resistance, np.float64)
    res = res.copy()
    res[0] = 0.0
    n_children = np.bincount(parent_arr[1:], minlength=n)
    mode = np.where(n_children > 0, INTERIOR, CONTINUES).astype(np.int8)
    return WeightedTree(parent_arr, res, mode, np.arange(n, dtype=np.uint64), depth, tag)


@dataclass(frozen=True)
class TreeSpec:
    """Declarative tree description.

    ``kind`` is one of ``regular`` (param ``d``: root has d children, others
    d-1), ``kary`` (``k`` children everywhere), ``increasing`` (depth-n
    vertices have n+2 children), ``joined`` (``d``: root joined to a binary
    tree and a d-ary tree), ``random_tw`` (``delta``, ``Delta``, ``r``,
    ``seed``), ``star`` (``L``, ``seed``: random tree satisfying both
    non-amenability conditions with constant L), ``pipe_decorated``
    (``base`` spec, ``pipe_lengths``), ``bush_decorated`` (``base``,
    ``bush_size``, ``at``), ``file`` (``path``).
    """

    kind: str
    depth: int = 1
    params: tuple = ()
    resistance: float = 1.0

    def param(self, name: str, default=None):
        return dict(self.params).get(name, default)

    def with_depth(self, depth: int) -> "TreeSpec":
        return TreeSpec(self.kind, depth, self.params, self.resistance)

    @property
    def tag(self) -> str:
        inner = ",".join(f"{k}={_fmt(v)}" for k, v in self.params)
        r = "" if self.resistance == 1.0 else f";r={self.resistance:g}"
        return f"{self.kind}({inner})@{self.depth}{r}"


def _fmt(v) -> str:
    if isinstance(v, TreeSpec):
        return v.tag
    if isinstance(v, (list, tuple)):
        return "[" + " ".join(str(x) for x in v) + "]"
    return str(v)


def spec(kind: str, depth: int = 1, resistance: float = 1.0, **params) -> TreeSpec:
    return TreeSpec(kind, depth, tuple(sorted(params.items())), resistance)


def _split_top(text: str) -> list[str]:
    out, depth, cur = [], 0, []
    for ch in text:
        if ch in "([":
            depth += 1
        elif ch in ")]":
            depth -= 1
        if ch == "," and depth == 0:
            out.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    if cur:
        out.append("".join(cur))
    return [x.strip() for x in out if x.strip()]


def _value(text: str):
    if "(" in text and "@" in text:
        return parse_spec(text)
    if text.startswith("["):
        if not text.endswith("]"):
            raise TreeError(f"unterminated list {text!r}")
        return tuple(int(x) for x in text[1:-1].replace(",", " ").split())
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


def parse_spec(text: str) -> TreeSpec:
    """Inverse of :attr:`TreeSpec.tag`: ``kind(key=value,...)@depth`` with optional ``;r=x``."""
    text = text.strip()
    res = 1.0
    head, sep, tail = text.rpartition("@")
    if not sep or "(" not in head or not head.endswith(")"):
        raise TreeError(f"tree spec must look like kind(key=value,...)@depth, got {text!r}")
    if ";" in tail:
        tail, _, rpart = tail.partition(";")
        if not rpart.startswith("r="):
            raise TreeError(f"unknown spec suffix {rpart!r}")
        res = float(rpart[2:])
    try:
        depth = int(tail)
    except ValueError:
        raise TreeError(f"bad depth {tail!r} in {text!r}") from None
    kind, _, inner = head[:-1].partition("(")
    params = {}
    for item in _split_top(inner):
        key, eq, val = item.partition("=")
        if not eq:
            raise TreeError(f"expected key=value, got {item!r}")
        params[key.strip()] = _value(val.strip())
    return spec(kind.strip(), depth, res, **params)


def _level_counts(spec_: TreeSpec, budget: int = DEFAULT_VERTEX_BUDGET) -> list[np.ndarray]:
    d = spec_.depth
    kind = spec_.kind
    if kind == "regular":
        deg = _int_param(spec_, "d")
        if deg < 2:
            raise TreeError("regular(d) requires d >= 2")
        _check_budget(_count_vertices(spec_), budget)
        sizes = [1] + [deg * (deg - 1) ** (k - 1) for k in range(1, d)]
        return [np.full(s, deg if k == 0 else deg - 1) for k, s in enumerate(sizes)]
    if kind == "kary":
        k_ = _int_param(spec_, "k")
        if k_ < 1:
            raise TreeError("kary(k) requires k >= 1")
        _check_budget(_count_vertices(spec_), budget)
        return [np.full(k_**k, k_) for k in range(d)]
    if kind == "increasing":
        _check_budget(_count_vertices(spec_), budget)
        out, size = [], 1
        for k in range(d):
            out.append(np.full(size, k + 2))
            size *= k + 2
        return out
    raise TreeError(f"not a level-generated kind: {kind}")


def _int_param(spec_: TreeSpec, name: str) -> int:
    v = spec_.param(name)
    if v is None:
        raise TreeError(f"{spec_.kind} needs parameter {name}")
    try:
        return int(v)
    except (TypeError, ValueError):
        raise TreeError(f"{spec_.kind}: parameter {name} must be an integer, got {v!r}") from None


def _count_vertices(spec_: TreeSpec) -> int:
    """Exact vertex count of a level-generated kind, without building anything."""
    total, size = 1, 1
    for k in range(spec_.depth):
        if spec_.kind == "regular":
            c = int(spec_.param("d")) - (k > 0)
        elif spec_.kind == "kary":
            c = int(spec_.param("k"))
        else:
            c = k + 2
        size *= c
        total += size
    return total


def _check_budget(total: int, budget: int) -> None:
    if total > budget:
        raise BudgetExceeded(f"tree would have {total} vertices (budget {budget})")


def build_tree(spec_: TreeSpec, budget: int = DEFAULT_VERTEX_BUDGET) -> WeightedTree:
    """Materialize a :class:`TreeSpec`."""
    if spec_.depth < 1 and spec_.kind != "file":
        raise TreeError("depth must be >= 1")
    kind = spec_.kind
    if kind in ("regular", "kary", "increasing"):
        counts = _level_counts(spec_, budget)
        return _from_child_counts(counts, spec_.resistance, spec_.depth, spec_.tag)
    if kind == "joined":
        dd = _int_param(spec_, "d")
        if dd < 2:
            raise TreeError("joined(d) requires d >= 2")
        _check_budget(1 + sum(2**k + dd**k for k in range(1, spec_.depth + 1)), budget)
        levels = [np.array([2])]
        for k in range(1, spec_.depth):
            levels.append(np.concatenate([np.full(2 ** (k - 1), 2), np.full(dd ** (k - 1), dd)]))
        _check_budget(1 + sum(int(c.sum()) for c in levels), budget)
        return _from_child_counts(levels, spec_.resistance, spec_.depth, spec_.tag)
    if kind == "random_tw":
        return random_tw_tree(int(spec_.param("delta", 3)), int(spec_.param("Delta", 6)),
                              int(spec_.param("r", 3)), spec_.depth, int(spec_.param("seed", 0)),
                              budget=budget)
    if kind == "star":
        return random_star_tree(_int_param(spec_, "L"), spec_.depth, int(spec_.param("seed", 0)),
                                budget=budget)
    if kind == "pipe_decorated":
        base = build_tree(spec_.param("base"), budget)
        return decorate(base, pipe_lengths=spec_.param("pipe_lengths", 1), budget=budget,
                        tag=spec_.tag)
    if kind == "bush_decorated":
        base = build_tree(spec_.param("base"), budget)
        return decorate(base, bush_size=int(spec_.param("bush_size", 1)),
                        bush_at=spec_.param("at"), budget=budget, tag=spec_.tag)
    if kind == "file":
        return read_tree(spec_.param("path"))
    raise TreeError(f"unknown tree kind {kind!r}")


def random_tw_tree(delta: int, Delta: int, r: int, depth: int, seed: int,
                   budget: int = DEFAULT_VERTEX_BUDGET) -> WeightedTree:
    """Random member of T(delta, Delta, r): degrees uniform in [delta, Delta], integer resistances in [1, r]."""
    if delta < 3 or Delta < delta or r < 1:
        raise TreeError("need 3 <= delta <= Delta and r >= 1")
    rng = np.random.default_rng(seed)
    levels = [rng.integers(delta, Delta + 1, size=1)]
    total = 1 + int(levels[0].sum())
    for _ in range(1, depth):
        m = int(levels[-1].sum())
        levels.append(rng.integers(delta - 1, Delta, size=m))
        total += int(levels[-1].sum())
        _check_budget(total, budget)
    res = rng.integers(1, r + 1, size=total).astype(np.float64)
    return _from_child_counts(levels, res, depth,
                              f"random_tw(delta={delta},Delta={Delta},r={r},seed={seed})@{depth}")


def random_star_tree(L: int, depth: int, seed: int,
                     budget: int = DEFAULT_VERTEX_BUDGET) -> WeightedTree:
    """Random tree satisfying both non-amenability conditions with constant ``L``.

    A 3-regular backbone whose edges are subdivided by pipes of 0..L-1
    vertices, with a path-shaped bush of 0..L-1 vertices hanging at each
    branch point.  Pipe vertices never carry bushes, so off-backbone
    components have at most L vertices and degree-2 runs have fewer than L.
    """
    if L < 1:
        raise TreeError("L must be >= 1")
    base = build_tree(spec("regular", depth, d=3), budget)
    rng = np.random.default_rng(seed)
    pipes = rng.integers(0, L, size=base.n)
    pipes[0] = 0
    bushes = rng.integers(0, L, size=base.n)
    bushes[base.leaf_mode != INTERIOR] = 0
    return decorate(base, pipe_lengths=pipes, bush_size=bushes, budget=budget,
                    tag=f"star(L={L},seed={seed})@{depth}")


def decorate(base: WeightedTree, pipe_lengths=0, bush_size=0, bush_at=None,
             budget: int = DEFAULT_VERTEX_BUDGET, tag: str | None = None) -> WeightedTree:
    """Subdivide edges into pipes and hang path-shaped bushes off vertices.

    ``pipe_lengths`` / ``bush_size`` are scalars or per-vertex arrays
    (indexed by base vertex; the pipe replaces the edge to the parent).
    ``bush_at`` restricts bushes to the given base vertex ids.  Inserted pipe
    vertices have unit-resistance edges; bush vertices are true leaves.
    Cutoff leaves stand for an infinite continuation and get no bush.
    """
    n = base.n
    pipes = np.broadcast_to(np.asarray(pipe_lengths, np.int64), (n,))
    bush = np.broadcast_to(np.asarray(bush_size, np.int64), (n,)).copy()
    if bush_at is not None:
        mask = np.zeros(n, bool)
        for vid in np.atleast_1d(bush_at):
            mask[base.index_of(int(vid))] = True
        bush[~mask] = 0
    bush[base.leaf_mode == CONTINUES] = 0
    extra = int(pipes[1:].sum() + bush.sum())
    _check_budget(n + extra, budget)
    next_id = int(base.ids.max()) + 1
    edges: list[tuple[int, int, float]] = []
    modes: dict[int, int] = {}
    ids = [int(x) for x in base.ids]
    for v in range(n):
        # bushes come first in child order, then the real children
        if bush[v] > 0:
            prev = ids[v]
            for _ in range(int(bush[v])):
                edges.append((prev, next_id, 1.0))
                prev = next_id
                next_id += 1
            modes[prev] = TRUE_LEAF
        for c in base.children(v):
            prev = ids[v]
            for _ in range(int(pipes[c])):
                edges.append((prev, next_id, 1.0))
                prev = next_id
                next_id += 1
            edges.append((prev, ids[c], float(base.resistance[c])))
        if base.n_children[v] == 0 and bush[v] == 0:
            modes[ids[v]] = int(base.leaf_mode[v])
    return from_edges(ids[0], edges, modes, default_leaf=TRUE_LEAF, tag=tag or base.tag + "+dec")


# ---------------------------------------------------------------------------
# validation against the class T_w


@dataclass(frozen=True)
class TwValidation:
    ok: bool
    delta: int
    Delta: int
    r: float
    violations: tuple[str, ...]


def validate_Tw(tree: WeightedTree) -> TwValidation:
    """Check membership of the finite realization in T_w.

    Every interior vertex (root included) needs total degree >= 3, every
    resistance must be a positive integer, and the leaves must all be depth
    cutoffs.  Returns the tight observed (delta, Delta, r) either way.
    """
    violations: list[str] = []
    n = tree.n
    deg = tree.n_children + (np.arange(n) > 0)
    interior = np.flatnonzero(tree.n_children > 0)
    delta, Delta, r = tree.meta
    low = interior[deg[interior] < 3]
    for v in low[:20]:
        violations.append(f"vertex {int(tree.ids[v])}: degree {int(deg[v])} below 3")
    res = tree.resistance[1:]
    bad_sign = np.flatnonzero(res <= 0) + 1
    for v in bad_sign[:20]:
        violations.append(
            f"edge {int(tree.ids[tree.parent[v]])}-{int(tree.ids[v])}: non-positive resistance {tree.resistance[v]:g}"
        )
    nonint = np.flatnonzero((res != np.round(res)) & (res > 0)) + 1
    for v in nonint[:20]:
        violations.append(
            f"edge {int(tree.ids[tree.parent[v]])}-{int(tree.ids[v])}: non-integer resistance {tree.resistance[v]:g}"
        )
    leaves = np.flatnonzero(tree.leaf_mode == TRUE_LEAF)
    for v in leaves[:20]:
        violations.append(f"vertex {int(tree.ids[v])}: true leaf (T_w trees are leafless)")
    if len(interior):
        by_depth = np.zeros(tree.max_depth + 1, np.int64)
        np.maximum.at(by_depth, tree.depth[interior], deg[interior])
        active = by_depth[: tree.max_depth]
        if len(active) >= 3 and np.all(np.diff(active[1:]) > 0):
            violations.append(
                f"unbounded degree growth: max degree rises every level "
                f"(observed Delta = {Delta}, max children {int(tree.n_children.max())})"
            )
    return TwValidation(not violations, delta, Delta, r, tuple(violations))


# ---------------------------------------------------------------------------
# backbone analysis


@dataclass(frozen=True)
class BackboneReport:
    in_backbone: np.ndarray
    max_offbackbone_component: int
    max_degree2_run: int
    component_witness: tuple[int, ...]
    run_witness: tuple[int, ...]
    empty: bool
    note: str = "backbone = vertices on a downward path from the root to a CONTINUES leaf (finite proxy)"


def compute_backbone(tree: WeightedTree) -> BackboneReport:
    n = tree.n
    alive = tree.leaf_mode == CONTINUES
    # a vertex is on the backbone iff some descendant is a CONTINUES leaf
    for d in range(tree.max_depth, 0, -1):
        lv = np.arange(*_range(tree.level(d)))
        hits = lv[alive[lv]]
        alive[tree.parent[hits]] = True
    if not alive[0]:
        return BackboneReport(np.zeros(n, bool), 0, 0, (), (), True,
                              note="no CONTINUES leaf: the backbone is empty")
    # off-backbone mass hanging at each backbone vertex
    size = np.ones(n, np.int64)
    for d in range(tree.max_depth, 0, -1):
        lv = np.arange(*_range(tree.level(d)))
        off = lv[~alive[lv]]
        np.add.at(size, tree.parent[off], size[off])
    comp = np.where(alive, size, 0)
    vmax = int(np.argmax(comp))
    witness = [vmax]
    stack = [c for c in tree.children(vmax) if not alive[c]]
    while stack:
        u = stack.pop()
        witness.append(u)
        stack.extend(tree.children(u))
    # backbone degree; CONTINUES leaves have unknown degree and break runs
    bb_children = np.zeros(n, np.int64)
    idx = np.flatnonzero(alive[1:]) + 1
    np.add.at(bb_children, tree.parent[idx], 1)
    bdeg = bb_children + (np.arange(n) > 0)
    run_vertex = alive & (bdeg == 2) & (tree.leaf_mode != CONTINUES)
    run_len = np.zeros(n, np.int64)
    run_len[0] = 1 if run_vertex[0] else 0
    for d in range(1, tree.max_depth + 1):
        lv = np.arange(*_range(tree.level(d)))
        rv = lv[run_vertex[lv]]
        run_len[rv] = run_len[tree.parent[rv]] + 1
    best = int(np.argmax(run_len))
    run = []
    if run_len[best] > 0:
        v = best
        while v >= 0 and run_vertex[v]:
            run.append(v)
            v = int(tree.parent[v]) if v else -1
    return BackboneReport(
        alive.copy(), int(comp[vmax]), int(run_len[best]),
        tuple(int(tree.ids[x]) for x in witness), tuple(int(tree.ids[x]) for x in reversed(run)),
        False,
    )


def _range(r: range) -> tuple[int, int]:
    return r.start, r.stop


def classify_nonamenable(report: BackboneReport, M: int) -> bool:
    """Both structural conditions with the same constant M."""
    if M < 1:
        raise TreeError("M must be a positive integer")
    return report.max_offbackbone_component <= M and report.max_degree2_run < M


def backbone_tree(tree: WeightedTree) -> WeightedTree:
    """Restrict to the backbone (drop every finite bush)."""
    rep = compute_backbone(tree)
    if rep.empty:
        raise TreeError("backbone is empty")
    keep = np.flatnonzero(rep.in_backbone)
    remap = np.full(tree.n, -1, np.int64)
    remap[keep] = np.arange(len(keep))
    parent = np.where(keep == 0, -1, remap[tree.parent[keep]])
    return WeightedTree(parent, tree.resistance[keep], tree.leaf_mode[keep], tree.ids[keep],
                        tree.depth_cutoff, tree.tag + "/backbone")


def contract_pipes(tree: WeightedTree) -> WeightedTree:
    """Replace every maximal run of one-child vertices by a single edge.

    The new edge's resistance is the sum along the run (its length for unit
    resistances).  The root and all branch points keep their ids.
    """
    if np.any(tree.leaf_mode == TRUE_LEAF):
        raise TreeError("contract_pipes needs a leafless (backbone-only) tree; remove bushes first")
    n = tree.n
    pipe = (tree.n_children == 1) & (np.arange(n) > 0)
    if not pipe.any():
        return tree
    acc = tree.resistance.copy()
    new_parent_of = np.full(n, -1, np.int64)
    for d in range(1, tree.max_depth + 1):
        lv = np.arange(*_range(tree.level(d)))
        p = tree.parent[lv]
        through = pipe[p]
        # resistance accumulated from the last kept vertex
        acc[lv] = np.where(through, acc[p] + tree.resistance[lv], tree.resistance[lv])
        new_parent_of[lv] = np.where(through, new_parent_of[p], p)
    kept = np.flatnonzero(~pipe)
    # from_edges re-sorts into breadth-first order of the contracted tree
    edges = [(int(tree.ids[new_parent_of[v]]), int(tree.ids[v]), float(acc[v])) for v in kept if v != 0]
    modes = {int(tree.ids[v]): int(tree.leaf_mode[v]) for v in kept if tree.n_children[v] == 0}
    return from_edges(int(tree.ids[0]), edges, modes, tag=tree.tag + "/contracted")


# ---------------------------------------------------------------------------
# text format


def write_tree(tree: WeightedTree, path: str | Path | None = None) -> str:
    lines = [f"root {int(tree.ids[0])}"]
    for v in range(1, tree.n):
        lines.append(f"edge {int(tree.ids[tree.parent[v]])} {int(tree.ids[v])} {float(tree.resistance[v])!r}")
    for v in np.flatnonzero(tree.n_children == 0):
        mode = "inf" if tree.leaf_mode[v] == CONTINUES else "leaf"
        lines.append(f"leafmode {int(tree.ids[v])} {mode}")
    text = "\n".join(lines) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


def parse_tree(text: str, tag: str = "file") -> WeightedTree:
    root = None
    edges = []
    modes: dict[int, int] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if parts[0] == "root" and len(parts) == 2:
                if root is not None:
                    raise TreeError(f"line {lineno}: duplicate root")
                root = _u64(parts[1])
            elif parts[0] == "edge" and len(parts) == 4:
                r = float(parts[3])
                if not math.isfinite(r):
                    raise ValueError(parts[3])
                edges.append((_u64(parts[1]), _u64(parts[2]), r))
            elif parts[0] == "leafmode" and len(parts) == 3 and parts[2] in ("inf", "leaf"):
                modes[_u64(parts[1])] = CONTINUES if parts[2] == "inf" else TRUE_LEAF
            else:
                raise TreeError(f"line {lineno}: unknown directive {raw.strip()!r}")
        except ValueError as exc:
            if isinstance(exc, TreeError):
                raise
            raise TreeError(f"line {lineno}: bad number in {raw.strip()!r}") from None
    if root is None:
        raise TreeError("missing 'root' line")
    return from_edges(root, edges, modes, default_leaf=TRUE_LEAF, tag=tag)


def _u64(s: str) -> int:
    v = int(s)
    if not 0 <= v < 2**64:
        raise ValueError(s)
    return v


def read_tree(path: str | Path) -> WeightedTree:
    p = Path(path)
    return parse_tree(p.read_text(), tag=f"file:{p.name}")
