"""Edge expansion, transience thresholds and the branching random walk comparison.

For a finite connected set K of vertices in a tree,

    |dK| = sum of degrees over K - 2(|K| - 1),   |K|_D = sum of degrees over K,

so at a fixed size the ratio 1 - 2(|K| - 1)/|K|_D is smallest for the
connected set of smallest degree sum.  :func:`enumerate_edge_expansion` finds that set for
every size up to k with a tree knapsack, and :func:`enumerate_connected_sets`
lists the sets one by one (each exactly once) as an independent oracle.

Degrees are those of the infinite tree: cutoff leaves may not join K, but
edges from K into them count toward dK since the tree continues there.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from . import kernels
from .parallel import ordered_map, worker_count
from .potential import LevelProfile, SpectralEstimate
from .tree import CONTINUES, BudgetExceeded, WeightedTree
from .walks import srw_weights

DEFAULT_SUBSET_BUDGET = 10**8
DEFAULT_MAX_POPULATION = 10**7
NONE = 2**40  # "no set of this size": far above any degree sum, safe to add twice


def _degrees(tree: WeightedTree) -> np.ndarray:
    return tree.n_children + (np.arange(tree.n) > 0)


# ---------------------------------------------------------------------------
# edge expansion


@dataclass(frozen=True)
class ExpansionReport:
    phi_enumerated: float
    certificate: tuple[int, ...]  # vertex ids of the minimizing set
    boundary: int
    volume: int
    max_subset_size: int
    phi_lower_analytic: Fraction | None
    L: int | None
    per_size: tuple[float, ...]  # best ratio at each size 1..k (nan if no set of that size)
    method: str
    complete: bool
    subsets_examined: int

    @property
    def ratio(self) -> Fraction:
        return Fraction(self.boundary, self.volume)

    @property
    def satisfies_analytic(self) -> bool | None:
        if self.phi_lower_analytic is None:
            return None
        return self.ratio >= self.phi_lower_analytic


def _best_by_size(tree: WeightedTree, k: int) -> tuple[np.ndarray, np.ndarray]:
    """f[v, s] = min degree sum of a connected set of size s whose top vertex is v (NONE if none)."""
    n = tree.n
    deg = _degrees(tree)
    allowed = tree.leaf_mode != CONTINUES
    f = np.full((n, k + 1), NONE, np.int64)
    for v in range(n - 1, -1, -1):
        if not allowed[v]:
            continue
        cur = np.full(k + 1, NONE, np.int64)
        cur[1] = deg[v]
        for c in tree.children(v):
            fc = f[c]
            if fc[1] == NONE:
                continue
            nxt = cur.copy()
            for a in range(1, k):
                if cur[a] == NONE:
                    continue
                nxt[a + 1:] = np.minimum(nxt[a + 1:], cur[a] + fc[1:k - a + 1])
            cur = nxt
        f[v] = cur
    return f, deg


def _reconstruct(tree: WeightedTree, f: np.ndarray, deg: np.ndarray, v: int, s: int) -> list[int]:
    kids = [c for c in tree.children(v) if f[c, 1] != NONE]
    # redo the knapsack at v keeping every intermediate table
    tables = [np.full(s + 1, NONE, np.int64)]
    tables[0][1] = deg[v]
    for c in kids:
        cur = tables[-1]
        nxt = cur.copy()
        for a in range(1, s):
            if cur[a] != NONE:
                nxt[a + 1:] = np.minimum(nxt[a + 1:], cur[a] + f[c, 1:s - a + 1])
        tables.append(nxt)
    out = [v]
    left = s
    for i in range(len(kids) - 1, -1, -1):
        c = kids[i]
        prev = tables[i]
        if prev[left] == tables[i + 1][left]:
            continue
        for b in range(1, left):
            if prev[left - b] + f[c, b] == tables[i + 1][left]:
                out += _reconstruct(tree, f, deg, c, b)
                left -= b
                break
    assert left == 1
    return out


def enumerate_edge_expansion(tree: WeightedTree, k: int, L: int | None = None,
                             method: str = "dp", budget: int = DEFAULT_SUBSET_BUDGET,
                             workers: int | None = None) -> ExpansionReport:
    """Minimum of |dK|/|K|_D over connected K with |K| <= k.

    ``method="dp"`` is exact at any k; ``method="enumerate"`` visits every
    connected set and stops with a partial report after ``budget`` sets.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    lower = tree_iso_bound(L) if L is not None else None
    if method == "dp":
        f, deg = _best_by_size(tree, k)
        per = []
        best = None
        for s in range(1, k + 1):
            col = f[:, s]
            if col.min() >= NONE:
                per.append(math.nan)
                continue
            D = int(col.min())
            b = D - 2 * (s - 1)
            per.append(b / D)
            if best is None or Fraction(b, D) < Fraction(best[0], best[1]):
                best = (b, D, int(np.argmin(col)), s)
        if best is None:
            raise ValueError("tree has no vertex that may join K")
        cert = _reconstruct(tree, f, deg, best[2], best[3])
        return ExpansionReport(best[0] / best[1], tuple(int(tree.ids[x]) for x in sorted(cert)),
                               best[0], best[1], k, lower, L, tuple(per), "dp", True, 0)
    if method != "enumerate":
        raise ValueError(f"unknown method {method!r}")
    deg = _degrees(tree)
    allowed = np.flatnonzero(tree.leaf_mode != CONTINUES)
    nw = worker_count(workers)
    chunks = [allowed[i::nw] for i in range(nw)] if nw > 1 else [allowed]
    share = max(1, budget // len(chunks))

    def run(starts: np.ndarray):
        best = [math.inf] * (k + 1)
        cert: dict[int, tuple[int, ...]] = {}
        count = 0
        for s in starts:
            for K in enumerate_connected_sets(tree, int(s), k):
                count += 1
                if count > share:
                    return best, cert, count, False
                D = int(deg[list(K)].sum())
                r = (D - 2 * (len(K) - 1)) / D
                if r < best[len(K)]:
                    best[len(K)] = r
                    cert[len(K)] = K
        return best, cert, count, True

    parts = ordered_map(run, chunks, nw)
    best = [min(p[0][s] for p in parts) for s in range(k + 1)]
    count = sum(p[2] for p in parts)
    complete = all(p[3] for p in parts)
    s_best = min(range(1, k + 1), key=lambda s: (best[s], s))
    if not math.isfinite(best[s_best]):
        raise BudgetExceeded(f"subset budget {budget} exhausted before any set was scored")
    K = next(p[1][s_best] for p in parts if p[0][s_best] == best[s_best])
    D = int(deg[list(K)].sum())
    return ExpansionReport(best[s_best], tuple(int(tree.ids[x]) for x in sorted(K)),
                           D - 2 * (len(K) - 1), D, k, lower, L,
                           tuple(b if math.isfinite(b) else math.nan for b in best[1:]),
                           "enumerate", complete, count)


def enumerate_connected_sets(tree: WeightedTree, v: int, k: int) -> Iterator[tuple[int, ...]]:
    """Connected sets of size <= k whose smallest vertex index is ``v``, each once.

    Extension-set generation: a set grows only by vertices larger than
    ``v`` that are not already adjacent to an earlier member.
    """
    if tree.leaf_mode[v] == CONTINUES:
        return
    ok = tree.leaf_mode != CONTINUES

    def nbrs(x: int) -> list[int]:
        return [y for y in tree.neighbors(x) if y > v and ok[y]]

    def grow(sub: tuple[int, ...], ext: list[int], closed: set[int]) -> Iterator[tuple[int, ...]]:
        yield sub
        if len(sub) == k:
            return
        ext = list(ext)
        while ext:
            w = ext.pop()
            new = [y for y in nbrs(w) if y not in closed]
            yield from grow(sub + (w,), ext + new, closed | set(new))

    start = nbrs(v)
    yield from grow((v,), start, {v, *start})


def write_expansion_csv(reports: Sequence[ExpansionReport], path: str | Path, header: str = "") -> None:
    with open(path, "w", newline="") as fh:
        fh.write(header)
        w = csv.writer(fh)
        w.writerow(["k", "phi", "certificate_size", "boundary", "volume", "method", "complete"])
        for r in reports:
            w.writerow([r.max_subset_size, repr(r.phi_enumerated), len(r.certificate), r.boundary,
                        r.volume, r.method, int(r.complete)])


# ---------------------------------------------------------------------------
# closed-form bounds


def _check_L(L) -> int:
    if isinstance(L, bool) or int(L) != L or L < 1:
        raise ValueError(f"L must be an integer >= 1, got {L!r}")
    return int(L)


def tree_iso_bound(L: int) -> Fraction:
    """1/(9 L^2)."""
    L = _check_L(L)
    return Fraction(1, 9 * L * L)


def transience_threshold(phi):
    """phi^2 / (2 - phi^2); exact when ``phi`` is an int or Fraction."""
    exact = isinstance(phi, (int, Fraction)) and not isinstance(phi, bool)
    if not (0 < phi <= 1):
        raise ValueError(f"phi must lie in (0, 1], got {phi!r}")
    if exact:
        p2 = Fraction(phi) ** 2
        return p2 / (2 - p2)
    p2 = float(phi) ** 2
    return p2 / (2.0 - p2)


def corollary_bound(L: int) -> Fraction:
    """1/(162 L^4)."""
    L = _check_L(L)
    return Fraction(1, 162 * L**4)


@dataclass(frozen=True)
class TransienceBound:
    phi: Fraction | float
    lambda0: Fraction | float
    L: int | None
    corollary: Fraction | None

    @classmethod
    def from_phi(cls, phi, L: int | None = None) -> "TransienceBound":
        return cls(phi, transience_threshold(phi), L, corollary_bound(L) if L is not None else None)

    @classmethod
    def analytic(cls, L: int) -> "TransienceBound":
        return cls.from_phi(tree_iso_bound(L), L)


# ---------------------------------------------------------------------------
# isoperimetric sandwich


@dataclass(frozen=True)
class SandwichReport:
    lower_side: float  # phi_lower^2 / 2
    gap_low: float  # 1 - rho_upper
    gap_high: float  # 1 - rho_lower
    upper_side: float  # phi_enumerated
    lower_holds: bool
    upper_holds: bool
    verdict: str
    rule: str = ("lower: phi_lower^2/2 <= 1 - rho_upper; upper: 1 - rho_lower <= phi_enumerated; "
                 "Inconclusive when the rho bracket is wider than max_width")


def check_isoperimetric_sandwich(phi_lower_analytic, phi_enumerated: float | ExpansionReport,
                                 rho: SpectralEstimate | tuple[float, float],
                                 max_width: float = 0.05, tol: float = 0.0,
                                 tags: tuple[str, ...] = ()) -> SandwichReport:
    """Check phi^2/2 <= 1 - rho <= phi using the side of the rho bracket that certifies each."""
    if len(set(tags)) > 1:
        raise ValueError(f"inputs come from different trees: {', '.join(sorted(set(tags)))}")
    if isinstance(phi_enumerated, ExpansionReport):
        phi_enumerated = phi_enumerated.phi_enumerated
    lo, hi = rho.bracket if isinstance(rho, SpectralEstimate) else rho
    if not lo <= hi:
        raise ValueError("rho bracket is inverted")
    a = float(phi_lower_analytic) ** 2 / 2
    low_ok = a <= 1 - hi + tol
    up_ok = 1 - lo <= float(phi_enumerated) + tol
    if hi - lo > max_width:
        verdict = "Inconclusive"
    else:
        verdict = "Pass" if low_ok and up_ok else "Fail"
    return SandwichReport(a, 1 - hi, 1 - lo, float(phi_enumerated), low_ok, up_ok, verdict)


# ---------------------------------------------------------------------------
# branching random walk


@dataclass(frozen=True)
class BRWStats:
    trials: np.ndarray
    root_visits: np.ndarray
    peak: np.ndarray
    aborted: np.ndarray
    arrivals: np.ndarray  # trials x (horizon + 1), empty columns unless requested

    def mean_arrivals(self) -> np.ndarray:
        return self.arrivals.mean(axis=0)


def offspring_means(tree: WeightedTree, lam: float) -> np.ndarray:
    """lambda at non-root vertices, zero at the root and at cutoff leaves."""
    m = np.full(tree.n, float(lam))
    m[0] = 0.0
    m[tree.leaf_mode == CONTINUES] = 0.0
    return m


def run_brw(tree: WeightedTree, offspring_mean: float | np.ndarray, horizon: int, trials: int,
            seed: int, max_population: int = DEFAULT_MAX_POPULATION, steps: bool = False,
            workers: int | None = None) -> BRWStats:
    """One walker starts at the root; every landing at v adds Poisson(mean[v]) walkers there."""
    if horizon < 1 or trials < 1:
        raise ValueError("horizon and trials must be >= 1")
    mean = offspring_means(tree, offspring_mean) if np.isscalar(offspring_mean) else \
        np.ascontiguousarray(offspring_mean, dtype=float)
    if mean.shape != (tree.n,) or np.any(mean < 0):
        raise ValueError("offspring means must be one nonnegative value per vertex")
    ptr, nbr, _ = tree.adjacency()
    w = srw_weights(tree)
    vkind = np.ascontiguousarray(tree.leaf_mode, dtype=np.int8)
    ids = np.arange(trials, dtype=np.int64)
    nw = worker_count(workers)
    pieces = np.array_split(ids, max(1, min(4 * nw, trials))) if nw > 1 else [ids]
    parts = ordered_map(lambda sel: kernels.brw_batch(ptr, nbr, w, vkind, mean, seed,
                                                      np.ascontiguousarray(sel), horizon,
                                                      max_population, steps), pieces, nw)
    return BRWStats(ids, *(np.concatenate([p[key] for p in parts]) for key in
                           ("root_visits", "peak", "aborted", "arrivals")))


def run_brw_levels(profile: LevelProfile, lam: float, horizon: int, trials: int, seed: int,
                   max_population: int = DEFAULT_MAX_POPULATION) -> BRWStats:
    """The same process on a spherically symmetric tree, tracked by level counts.

    On such a tree the root-visit law only depends on how many walkers sit
    on each level, so walkers are moved in bulk: binomial up/down splits per
    level and one Poisson draw for all offspring landing on a level.
    """
    if horizon < 1 or trials < 1:
        raise ValueError("horizon and trials must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xB2]))
    up, _ = profile.walk_probabilities()
    D = profile.depth
    x = np.zeros((trials, D + 1), np.int64)
    x[:, 0] = 1
    arrivals = np.zeros((trials, horizon + 1), np.int64)
    peak = np.ones(trials, np.int64)
    aborted = np.zeros(trials, np.int8)
    live = np.ones(trials, bool)
    for t in range(1, horizon + 1):
        ups = rng.binomial(x[:, :D], up[:D])
        downs = x[:, :D] - ups
        y = np.zeros_like(x)
        y[:, :D - 1] += ups[:, 1:]
        y[:, 1:] += downs
        arrivals[:, t] = y[:, 0]
        y[:, D] = 0  # cutoff
        if lam > 0:
            y[:, 1:D] += rng.poisson(lam * y[:, 1:D])
        y[~live] = 0
        x = y
        pop = x.sum(axis=1)
        np.maximum(peak, pop, out=peak)
        over = pop > max_population
        if over.any():
            aborted[over] = 1
            live &= ~over
            x[over] = 0
        if not x.any():
            break
    return BRWStats(np.arange(trials, dtype=np.int64), arrivals[:, 1:].sum(axis=1), peak,
                    aborted, arrivals)


@dataclass(frozen=True)
class DecayFit:
    ratio: float  # fitted per-step factor of mean root arrivals
    ci_low: float
    ci_high: float
    times: np.ndarray
    mean_arrivals: np.ndarray
    boot: int

    @property
    def decaying(self) -> bool:
        return self.ci_high < 1.0


def _poisson_loglinear(t: np.ndarray, y: np.ndarray, n: int, iters: int = 50) -> tuple[float, float]:
    """IRLS fit of E[y] = n exp(a + b t); returns (a, b)."""
    X = np.column_stack([np.ones_like(t), t])
    mu = np.maximum(y, 0.5)
    beta = np.linalg.lstsq(X, np.log(mu / n), rcond=None)[0]
    for _ in range(iters):
        eta = X @ beta
        mu = n * np.exp(eta)
        z = eta + (y - mu) / mu
        W = mu
        new = np.linalg.solve(X.T @ (W[:, None] * X), X.T @ (W * z))
        if np.max(np.abs(new - beta)) < 1e-12:
            beta = new
            break
        beta = new
    return float(beta[0]), float(beta[1])


def fit_arrival_decay(arrivals: np.ndarray, times: Sequence[int], boot: int = 400,
                      seed: int = 0, level: float = 0.95) -> DecayFit:
    """Per-step ratio of mean root arrivals, with a trial-bootstrap percentile CI."""
    times = np.asarray(times, dtype=np.int64)
    A = arrivals[:, times].astype(float)
    n = A.shape[0]
    tf = times.astype(float)
    _, b = _poisson_loglinear(tf, A.sum(axis=0), n)
    rng = np.random.default_rng(seed)
    bs = np.empty(boot)
    for i in range(boot):
        idx = rng.integers(0, n, n)
        bs[i] = _poisson_loglinear(tf, A[idx].sum(axis=0), n)[1]
    q = (1 - level) / 2
    lo, hi = np.quantile(bs, [q, 1 - q])
    return DecayFit(math.exp(b), math.exp(lo), math.exp(hi), times, A.mean(axis=0), boot)


def write_brw_csv(stats: BRWStats, path: str | Path, header: str = "") -> None:
    with open(path, "w", newline="") as fh:
        fh.write(header)
        w = csv.writer(fh)
        w.writerow(["trial", "root_visits", "peak_population", "aborted"])
        for row in zip(stats.trials, stats.root_visits, stats.peak, stats.aborted):
            w.writerow([int(x) for x in row])
