"""Merge experiment directories into tidy tables and two-column plot data."""
from __future__ import annotations

import csv
import hashlib
import io
import math
from dataclasses import dataclass
from pathlib import Path

from .config import header, strip_header

METRICS = ("mean_returns", "median_returns", "se_returns", "mean_activated",
           "mean_max_activation_depth")


@dataclass(frozen=True)
class SweepResult:
    rows: int
    cells: int
    runs: tuple[str, ...]
    files: tuple[str, ...]


def read_manifest(path: Path) -> dict[str, str]:
    out = {}
    for line in path.read_text().splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        k, _, v = line.partition("=")
        out.setdefault(k.strip(), v.strip())
    return out


def _num(s: str) -> float:
    return float(s) if s not in ("", "nan") else math.nan


def sweep_report(root: str | Path, out: str | Path | None = None) -> SweepResult:
    """Collect every run under ``root`` (found by its manifest) into ``out`` (default root/sweep)."""
    root = Path(root)
    out = Path(out) if out is not None else root / "sweep"
    manifests = sorted(p for p in root.rglob("manifest.txt") if out not in p.parents)
    if not manifests:
        raise FileNotFoundError(f"no manifest.txt under {root}")
    metas = [(p.parent, read_manifest(p)) for p in manifests]
    tags = sorted({m.get("tree_tag", "?") for _, m in metas})
    if len(tags) > 1:
        raise ValueError(f"refusing to merge runs on different trees: {' vs '.join(tags)}")
    long_rows = []
    cells = 0
    for run_dir, _ in metas:
        _, body = strip_header((run_dir / "phase.csv").read_text())
        for row in csv.DictReader(io.StringIO(body)):
            cells += 1
            key = (_num(row["lambda"]), int(row["depth"]), int(row["horizon"]))
            for metric in METRICS:
                long_rows.append((key, metric, _num(row[metric]), str(run_dir.relative_to(root))))
    long_rows.sort(key=lambda r: (r[0], r[1], r[3]))
    digest = hashlib.sha256("".join(m.get("config_hash", "") for _, m in metas).encode()).hexdigest()
    seeds = " ".join(m.get("seed", "?") for _, m in metas)
    head = header(digest[:16], seeds, {"tree": tags[0], "runs": len(metas)})
    out.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    buf.write(head)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["lambda", "depth", "horizon", "metric", "value", "run"])
    for (lam, d, h), metric, val, run in long_rows:
        w.writerow([repr(lam), d, h, metric, repr(val) if math.isfinite(val) else "nan", run])
    (out / "long.csv").write_text(buf.getvalue())
    files = ["long.csv"]
    means = {}
    for key, metric, val, _ in long_rows:
        if metric == "mean_returns":
            means.setdefault(key, []).append(val)
    # lambda sweep per (depth, horizon); depth view per (lambda, horizon)
    for d, h in sorted({(k[1], k[2]) for k in means}):
        pts = sorted((k[0], v) for k, vs in means.items() if k[1:] == (d, h) for v in vs)
        name = f"lambda_sweep_d{d}_h{h}.dat"
        (out / name).write_text(head + "# lambda mean_returns\n" +
                                "".join(f"{lam!r} {v!r}\n" for lam, v in pts))
        files.append(name)
    for lam, h in sorted({(k[0], k[2]) for k in means}):
        pts = sorted((k[1], v) for k, vs in means.items() if (k[0], k[2]) == (lam, h) for v in vs)
        name = f"depth_view_lambda{lam!r}_h{h}.dat"
        (out / name).write_text(head + "# depth log_mean_returns\n" + "".join(
            f"{d} {math.log(v)!r}\n" if v > 0 else f"{d} nan\n" for d, v in pts))
        files.append(name)
    return SweepResult(len(long_rows), cells, tuple(str(p.relative_to(root)) for p, _ in metas),
                       tuple(files))
