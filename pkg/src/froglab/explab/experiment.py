"""Grid runs over (lambda, depth, horizon) and the finite-scale phase verdicts."""
from __future__ import annotations

import csv
import hashlib
import io
import math
import re
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .. import kernels
from ..amenability import run_brw
from ..frog import (
    FrogConfig, count_V, estimate_conditional_activation, level_watch, run_frog, write_event_log,
)
from ..potential import harmonic_measure
from ..tree import BudgetExceeded, WeightedTree, build_tree
from ..parallel import ordered_map, worker_count
from .config import ExperimentConfig, header, module_versions

Z95 = 1.959963984540054
VERDICT_RULE = ("weighted fit of log(mean returns) on depth; 95% slope CI entirely below 0 -> "
                "Transient-leaning, entirely above 0 -> Recurrent-leaning, otherwise Inconclusive")


@dataclass(frozen=True)
class SlopeFit:
    lam: float
    horizon: int
    depths: tuple[int, ...]
    slope: float
    ci_low: float
    ci_high: float
    verdict: str
    rule: str = VERDICT_RULE


def slope_verdict(depths, means, ses, lam: float = math.nan, horizon: int = 0) -> SlopeFit:
    """Fit log(mean) = a + b depth by weighted least squares (delta-method variances)."""
    d = np.asarray(depths, float)
    m = np.asarray(means, float)
    s = np.asarray(ses, float)
    if len(d) < 2 or np.any(m <= 0) or len(np.unique(d)) < 2:
        return SlopeFit(lam, horizon, tuple(int(x) for x in d), math.nan, math.nan, math.nan,
                        "Inconclusive")
    var = np.maximum((s / m) ** 2, 1e-12)
    w = 1.0 / var
    y = np.log(m)
    X = np.column_stack([np.ones_like(d), d])
    XtW = X.T * w
    cov = np.linalg.inv(XtW @ X)
    beta = cov @ (XtW @ y)
    se = math.sqrt(cov[1, 1])
    if len(d) > 2:
        # widen when the points scatter more than their error bars allow
        chi2 = float(np.sum(w * (y - X @ beta) ** 2))
        se *= math.sqrt(max(1.0, chi2 / (len(d) - 2)))
    b = float(beta[1])
    lo, hi = b - Z95 * se, b + Z95 * se
    verdict = "Transient-leaning" if hi < 0 else "Recurrent-leaning" if lo > 0 else "Inconclusive"
    return SlopeFit(lam, horizon, tuple(int(x) for x in d), b, lo, hi, verdict)


@dataclass
class Cell:
    lam: float
    depth: int
    horizon: int
    seed: int
    status: str = "ok"
    error: str = ""
    trials: np.ndarray | None = None
    returns: np.ndarray | None = None
    activated: np.ndarray | None = None
    max_depth: np.ndarray | None = None
    aborted: np.ndarray | None = None
    level_mass: list = field(default_factory=list)
    v_counts: np.ndarray | None = None
    conditional: object = None
    observed_vertex: int = -1

    @property
    def key(self) -> tuple:
        return (self.lam, self.depth, self.horizon)

    def summary(self) -> dict:
        if self.returns is None:
            return {"trials": 0, "mean_returns": math.nan, "median_returns": math.nan,
                    "se_returns": math.nan, "mean_activated": math.nan,
                    "mean_max_activation_depth": math.nan, "aborted_trials": 0}
        r = self.returns.astype(float)
        n = len(r)
        return {
            "trials": n,
            "mean_returns": float(r.mean()),
            "median_returns": float(np.median(r)),
            "se_returns": float(r.std(ddof=1) / math.sqrt(n)) if n > 1 else math.nan,
            "mean_activated": float(self.activated.mean()) if self.activated is not None else math.nan,
            "mean_max_activation_depth": float(self.max_depth.mean()) if self.max_depth is not None
            else math.nan,
            "aborted_trials": int(self.aborted.sum()),
        }


@dataclass(frozen=True)
class PhaseReport:
    config: ExperimentConfig
    tree_tag: str
    cells: tuple[Cell, ...]
    verdicts: tuple[SlopeFit, ...]
    files: tuple[str, ...]
    wall_time: float

    @property
    def failed(self) -> tuple[Cell, ...]:
        return tuple(c for c in self.cells if c.status != "ok")

    @property
    def budget_aborted(self) -> bool:
        return any(c.status == "budget" or (c.aborted is not None and c.aborted.any())
                   for c in self.cells)

    def verdict(self, lam: float, horizon: int | None = None) -> SlopeFit:
        for v in self.verdicts:
            if v.lam == lam and (horizon is None or v.horizon == horizon):
                return v
        raise KeyError(lam)


def cell_seed(seed: int, lam: float, depth: int, horizon: int) -> int:
    h = hashlib.sha256(f"{seed}:{lam!r}:{depth}:{horizon}".encode()).digest()
    return int.from_bytes(h[:8], "little")


def _run_cell(cfg: ExperimentConfig, tree: WeightedTree, cell: Cell, workers: int,
              event_log: Path | None = None) -> Cell:
    obs = set(cfg.observables)
    if cfg.model == "brw":
        st = run_brw(tree, cell.lam, cell.horizon, cfg.trials, cell.seed,
                     max_population=cfg.max_particles, workers=workers)
        cell.trials, cell.returns, cell.aborted = st.trials, st.root_visits, st.aborted
        return cell
    fc = FrogConfig(cell.lam, cfg.model, cell.horizon, cfg.trials, cell.seed, cfg.lambda_o,
                    cfg.placement, cfg.max_particles)
    v = tree.level(1).start
    cell.observed_vertex = int(tree.ids[v])
    watch = level_watch(tree, v, cfg.level_n) if "level_mass" in obs else ()
    run = run_frog(tree, fc, watch=watch, log="V_counts" in obs or event_log is not None,
                   workers=workers)
    if event_log is not None:
        write_event_log(run, tree, event_log / f"events_l{cell.lam!r}_d{cell.depth}_h{cell.horizon}.bin")
    cell.trials, cell.returns, cell.activated = run.trials, run.returns, run.activated
    cell.max_depth, cell.aborted = run.max_depth, run.aborted
    if "level_mass" in obs:
        hm = harmonic_measure(tree, v, cfg.level_n, cfg.level_margin)
        cols = run.watched(hm.vertices)
        mass = (run.watch_time[:, cols] >= 0) @ hm.mass
        on = run.watch_time[:, run.watched([v])[0]] >= 0
        cell.level_mass = [(int(t), float(m)) for t, m, a in zip(run.trials, mass, on) if a]
    if "V_counts" in obs:
        cell.v_counts = count_V(run, tree, v)
    if "conditional_activation" in obs:
        u = tree.level(2).start
        cc = FrogConfig(cell.lam, "truncated", cell.horizon, cfg.conditional_trials, cell.seed,
                        cfg.lambda_o, cfg.placement, cfg.max_particles)
        cell.conditional = estimate_conditional_activation(tree, cc, u, trials=cfg.conditional_trials)
    return cell


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x) if math.isfinite(x) else "nan"
    return str(x)


def _write(path: Path, head: str, columns: list[str], rows) -> str:
    buf = io.StringIO()
    buf.write(head)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(x) for x in row])
    path.write_text(buf.getvalue())
    return path.name


def run_experiment(cfg: ExperimentConfig, workers: int | None = None,
                   event_log: bool = False) -> PhaseReport:
    """Execute every grid cell, write one CSV per observable plus a manifest.

    With ``event_log`` every frog cell also writes its binary event log.
    """
    t0 = time.perf_counter()
    out = Path(cfg.outputs)
    out.mkdir(parents=True, exist_ok=True)
    trees: dict[int, WeightedTree] = {}
    cells: list[Cell] = []
    tree_errors: dict[int, str] = {}
    for depth in sorted(set(cfg.depth_grid)):
        try:
            trees[depth] = build_tree(cfg.tree_spec(depth))
        except Exception as exc:  # surfaced per cell below
            tree_errors[depth] = f"{type(exc).__name__}: {exc}"
    for lam in sorted(set(cfg.lambda_grid)):
        for depth in sorted(set(cfg.depth_grid)):
            for h in sorted(set(cfg.horizon_grid)):
                cells.append(Cell(lam, depth, h, cell_seed(cfg.seed, lam, depth, h)))
    tags = {re.sub(r"@\d+", "@*", t.tag) for t in trees.values()}
    tree_tag = cfg.tree if cfg.is_file else (tags.pop() if len(tags) == 1 else cfg.tree)

    nw = worker_count(workers)
    # cells run concurrently; each then runs its trials on a single thread
    inner = 1 if len(cells) > 1 and nw > 1 else nw

    def job(cell: Cell) -> Cell:
        if cell.depth in tree_errors:
            cell.status, cell.error = "error", tree_errors[cell.depth]
            return cell
        try:
            return _run_cell(cfg, trees[cell.depth], cell, inner, out if event_log else None)
        except BudgetExceeded as exc:
            cell.status, cell.error = "budget", str(exc)
        except Exception as exc:
            cell.status, cell.error = "error", f"{type(exc).__name__}: {exc}"
        return cell

    cells = ordered_map(job, cells, nw if len(cells) > 1 else 1)
    for c in cells:
        if c.status == "ok" and c.aborted is not None and c.aborted.any():
            c.status = "budget"
            c.error = f"{int(c.aborted.sum())} trials hit the particle cap"

    verdicts = []
    for lam in sorted(set(cfg.lambda_grid)):
        for h in sorted(set(cfg.horizon_grid)):
            group = [c for c in cells if c.lam == lam and c.horizon == h and c.returns is not None]
            sm = [c.summary() for c in group]
            verdicts.append(slope_verdict([c.depth for c in group], [s["mean_returns"] for s in sm],
                                          [s["se_returns"] for s in sm], lam, h))

    head = header(cfg.config_hash, cfg.seed, {"tree": tree_tag, "model": cfg.model})
    files = []
    files.append(_write(out / "phase.csv", head,
                        ["lambda", "depth", "horizon", "trials", "mean_returns", "median_returns",
                         "se_returns", "mean_activated", "mean_max_activation_depth",
                         "aborted_trials", "status"],
                        [[c.lam, c.depth, c.horizon, *c.summary().values(), c.status] for c in cells]))
    files.append(_write(out / "verdicts.csv", head,
                        ["lambda", "horizon", "depths", "slope", "ci_low", "ci_high", "verdict", "rule"],
                        [[v.lam, v.horizon, " ".join(map(str, v.depths)), v.slope, v.ci_low,
                          v.ci_high, v.verdict, v.rule] for v in verdicts]))
    obs = set(cfg.observables)
    if "returns" in obs:
        rows = []
        for c in cells:
            if c.returns is None:
                continue
            act = c.activated if c.activated is not None else np.full(len(c.returns), -1)
            md = c.max_depth if c.max_depth is not None else np.full(len(c.returns), -1)
            rows += [[c.lam, c.depth, c.horizon, int(t), int(r), int(a), int(m)]
                     for t, r, a, m in zip(c.trials, c.returns, act, md)]
        files.append(_write(out / "returns.csv", head,
                            ["lambda", "depth", "horizon", "trial_id", "returns_to_root",
                             "activated_count", "max_activation_depth"], rows))
    if "activation" in obs:
        rows = []
        for c in cells:
            if c.max_depth is None:
                continue
            for lev in range(c.depth + 1):
                rows.append([c.lam, c.depth, c.horizon, lev, float(np.mean(c.max_depth >= lev))])
        files.append(_write(out / "activation.csv", head,
                            ["lambda", "depth", "horizon", "level", "fraction_reaching_level"], rows))
    if "level_mass" in obs:
        rows = [[c.lam, c.depth, c.horizon, c.observed_vertex, cfg.level_n, t, m]
                for c in cells for t, m in c.level_mass]
        files.append(_write(out / "level_mass.csv", head,
                            ["lambda", "depth", "horizon", "vertex", "n", "trial_id", "mass"], rows))
    if "V_counts" in obs:
        rows = [[c.lam, c.depth, c.horizon, c.observed_vertex, int(t), int(v)]
                for c in cells if c.v_counts is not None for t, v in zip(c.trials, c.v_counts)]
        files.append(_write(out / "V_counts.csv", head,
                            ["lambda", "depth", "horizon", "vertex", "trial_id", "V"], rows))
    if "conditional_activation" in obs:
        rows = []
        for c in cells:
            e = c.conditional
            if e is None:
                continue
            rows.append([c.lam, c.depth, c.horizon, e.vertex, e.estimate, e.sigma, e.ci_low,
                         e.ci_high, e.accepted, e.attempted, int(e.inconclusive)])
        files.append(_write(out / "conditional_activation.csv", head,
                            ["lambda", "depth", "horizon", "vertex_index", "estimate", "sigma",
                             "ci_low", "ci_high", "accepted", "attempted", "inconclusive"], rows))
    wall = time.perf_counter() - t0
    report = PhaseReport(cfg, tree_tag, tuple(cells), tuple(verdicts), tuple(files), wall)
    write_manifest(report, out)
    return report


def write_manifest(report: PhaseReport, out: Path) -> None:
    cfg = report.config
    lines = [
        f"config_hash = {cfg.config_hash}",
        f"seed = {cfg.seed}",
        f"versions = {module_versions()}",
        f"backend = {kernels.BACKEND}",
        f"tree_tag = {report.tree_tag}",
        f"model = {cfg.model}",
        f"cells = {len(report.cells)}",
        f"files = {', '.join(report.files)}",
        f"wall_time_s = {report.wall_time:.3f}",
        f"finished_utc = {datetime.now(timezone.utc).isoformat(timespec='seconds')}",
    ]
    for c in report.cells:
        if c.status != "ok":
            lines.append(f"cell_problem = lambda={c.lam!r} depth={c.depth} horizon={c.horizon}: "
                         f"{c.status}: {c.error}")
    lines.append("# config")
    lines += [f"#   {ln}" for ln in cfg.source.splitlines()]
    (out / "manifest.txt").write_text("\n".join(lines) + "\n")
