import json
import math
import subprocess
import sys

import pytest

from froglab import parallel
from froglab.explab import (ConfigError, load_config, parse_config, run_experiment,
                            run_invariant_suite, slope_verdict, sweep_report)
from froglab.explab.cli import main
from froglab.explab.config import strip_header

BASE = """\
tree = regular(d=3)@6
model = standard
lambda_grid = 0.5, 2
depth_grid = 5, 6
horizon_grid = 20
trials = 60
seed = 7
outputs = {out}
observables = returns, activation, level_mass
level_margin = 0
"""


def write_cfg(tmp_path, name="run", extra="", **subs):
    text = BASE.format(out=name)
    for k, v in subs.items():
        text = "\n".join(f"{k} = {v}" if ln.startswith(k + " ") else ln
                         for ln in text.splitlines()) + "\n"
    p = tmp_path / f"{name}.cfg"
    p.write_text(text + extra)
    return p


def test_config_hash_ignores_layout():
    a = parse_config(BASE.format(out="x"))
    b = parse_config("# comment\n" + "\n".join(reversed(BASE.format(out="x").splitlines())))
    assert a.config_hash == b.config_hash
    assert parse_config(BASE.format(out="y")).config_hash != a.config_hash


@pytest.mark.parametrize("text, needle", [
    ("tree = regular(d=3)@4\n", "missing"),
    (BASE.format(out="x") + "colour = red\n", "unknown key"),
    (BASE.format(out="x") + "seed = 3\n", "duplicate"),
    (BASE.format(out="x").replace("trials = 60", "trials = many"), "bad value"),
    (BASE.format(out="x").replace("standard", "lazy"), "model"),
    (BASE.format(out="x").replace("returns, activation", "returns, colour"), "observables"),
    (BASE.format(out="x").replace("regular(d=3)@6", "regular(d=3"), "tree spec"),
    (BASE.format(out="x").replace("0.5, 2", "-1"), "lambda"),
    (BASE.format(out="x") + "nonsense\n", "key = value"),
])
def test_config_errors(text, needle):
    with pytest.raises(ConfigError, match=needle):
        parse_config(text)


def test_v_counts_needs_truncated():
    with pytest.raises(ConfigError, match="truncated"):
        parse_config(BASE.format(out="x").replace("level_mass", "V_counts"))


def test_relative_paths_follow_config(tmp_path):
    cfg = load_config(write_cfg(tmp_path))
    assert cfg.outputs == str(tmp_path / "run")
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.cfg")


def test_slope_verdict_rule():
    d = [8, 10, 12]
    assert slope_verdict(d, [10, 20, 40], [0.5, 1, 2]).verdict == "Recurrent-leaning"
    assert slope_verdict(d, [40, 20, 10], [2, 1, 0.5]).verdict == "Transient-leaning"
    flat = slope_verdict(d, [10, 10.1, 9.9], [0.5, 0.5, 0.5])
    assert flat.verdict == "Inconclusive" and flat.ci_low < 0 < flat.ci_high
    assert slope_verdict([8], [1], [0.1]).verdict == "Inconclusive"
    assert math.isnan(slope_verdict(d, [0, 1, 2], [1, 1, 1]).slope)


def test_experiment_outputs_and_determinism(tmp_path):
    a = run_experiment(load_config(write_cfg(tmp_path, "a")))
    b = run_experiment(load_config(write_cfg(tmp_path, "b")), workers=3)
    assert not a.failed and len(a.cells) == 4
    for name in ("phase.csv", "returns.csv", "activation.csv", "level_mass.csv", "verdicts.csv"):
        ma, body_a = strip_header((tmp_path / "a" / name).read_text())
        _, body_b = strip_header((tmp_path / "b" / name).read_text())
        assert body_a == body_b, name
        assert set(ma) >= {"config_hash", "seed", "versions"}
    man = (tmp_path / "a" / "manifest.txt").read_text()
    assert "tree_tag = regular(d=3)@*" in man and "config_hash = " in man
    assert {v.lam for v in a.verdicts} == {0.5, 2.0}


def test_cells_have_distinct_seeds(tmp_path):
    rep = run_experiment(load_config(write_cfg(tmp_path)))
    assert len({c.seed for c in rep.cells}) == len(rep.cells)


def test_truncated_observables(tmp_path):
    p = write_cfg(tmp_path, model="truncated", lambda_grid="0.5", depth_grid="6",
                  observables="returns, V_counts, conditional_activation",
                  extra="conditional_trials = 400\n")
    rep = run_experiment(load_config(p))
    assert not rep.failed
    assert (tmp_path / "run" / "V_counts.csv").exists()
    assert rep.cells[0].conditional.attempted == 400


def test_budget_cells_reported(tmp_path):
    p = write_cfg(tmp_path, lambda_grid="30", depth_grid="6", extra="max_particles = 100\n")
    rep = run_experiment(load_config(p))
    assert rep.budget_aborted
    assert "cell_problem" in (tmp_path / "run" / "manifest.txt").read_text()


def test_sweep_is_idempotent(tmp_path):
    root = tmp_path / "runs"
    root.mkdir()
    for name, seed in (("r1", 1), ("r2", 2)):
        run_experiment(load_config(write_cfg(root, name, seed=seed)))
    res = sweep_report(root)
    first = {f: (root / "sweep" / f).read_bytes() for f in res.files}
    again = sweep_report(root)
    assert again.files == res.files
    assert first == {f: (root / "sweep" / f).read_bytes() for f in again.files}
    assert res.cells == 8 and "long.csv" in res.files
    assert any(f.startswith("lambda_sweep_d5") for f in res.files)


def test_sweep_refuses_mixed_trees(tmp_path):
    root = tmp_path / "runs"
    root.mkdir()
    run_experiment(load_config(write_cfg(root, "a")))
    run_experiment(load_config(write_cfg(root, "b", tree="kary(k=3)@6")))
    with pytest.raises(ValueError, match="different trees"):
        sweep_report(root)
    with pytest.raises(FileNotFoundError):
        sweep_report(tmp_path / "empty")


def test_thread_cap(monkeypatch):
    monkeypatch.setenv("FROGLAB_THREADS", "2")
    assert parallel.worker_count(8) == 2
    assert parallel.ordered_map(lambda x: x * x, [3, 1, 2], 8) == [9, 1, 4]
    monkeypatch.setenv("FROGLAB_THREADS", "zero")
    with pytest.raises(ValueError):
        parallel.worker_count()


def test_invariant_suite_subset_and_faults():
    res = run_invariant_suite(["tree", "amenability"])
    assert res and all(r.passed for r in res)
    bad = run_invariant_suite(["tree"], faults=["flip-resistance"])
    assert not all(r.passed for r in bad)
    assert any("non-positive" in r.counterexample for r in bad)
    with pytest.raises(ValueError):
        run_invariant_suite(["nope"])


# command line -----------------------------------------------------------------


def test_cli_gen_tree_and_expansion(tmp_path, capsys):
    out = tmp_path / "t.tree"
    assert main(["gen-tree", "regular(d=3)@8", "-o", str(out)]) == 0
    assert main(["expansion", str(out), "-k", "10", "-o", str(tmp_path / "e.csv")]) == 0
    assert "= 12/30" in capsys.readouterr().out
    assert main(["expansion", "star(L=2,seed=1)@5", "-k", "8", "--L", "2"]) == 0
    assert main(["expansion", str(out), "-k", "9", "--method", "enumerate", "--budget", "50"]) == 3


@pytest.mark.parametrize("argv", [
    [],
    ["bogus"],
    ["gen-tree", "regular(d=3)@4"],
    ["gen-tree", "not-a-file", "-o", "x"],
    ["gen-tree", "regular(q=3)@4", "-o", "x"],
    ["simulate", "-c", "/nonexistent.cfg"],
    ["check", "--scope", "nope"],
    ["check", "--inject", "nope"],
])
def test_cli_usage_errors(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(argv) == 1


def test_cli_budget_exit(tmp_path):
    assert main(["gen-tree", "regular(d=3)@30", "-o", str(tmp_path / "x")]) == 3


def test_cli_simulate_and_sweep(tmp_path, capsys):
    p = write_cfg(tmp_path)
    assert main(["simulate", "-c", str(p), "--event-log"]) == 0
    assert list((tmp_path / "run").glob("events_*.bin"))
    assert main(["sweep", "--dir", str(tmp_path / "run")]) == 0
    assert main(["sweep", "-c", str(p)]) == 0
    assert "rule:" in capsys.readouterr().out
    p2 = write_cfg(tmp_path, "big", lambda_grid="30", depth_grid="6", extra="max_particles = 100\n")
    assert main(["simulate", "-c", str(p2)]) == 3


def test_cli_check(tmp_path, capsys):
    js = tmp_path / "r.json"
    assert main(["check", "--scope", "tree,amenability", "--json", str(js)]) == 0
    assert all(r["passed"] for r in json.loads(js.read_text()))
    assert main(["check", "--scope", "frog", "--inject", "drop-tie-survivor"]) == 2
    assert "counterexample" in capsys.readouterr().out


def test_cli_lerw_xval(capsys):
    assert main(["lerw-xval", "random_tw(delta=3,Delta=4,r=2,seed=7)@8", "--samples",
                 "20000"]) == 0
    assert "PASS" in capsys.readouterr().out
    assert main(["lerw-xval", "regular(d=3)@2"]) == 1


def test_entry_point_runs():
    r = subprocess.run([sys.executable, "-m", "froglab", "--version"], capture_output=True,
                       text=True)
    assert r.returncode == 0 and r.stdout.startswith("froglab ")
