import csv
import io
import subprocess
import sys
from pathlib import Path

import pytest

from rmabg.cli import main
from rmabg.instances import gen_synthetic_log

GOLDEN = Path(__file__).parent / "golden"


def write(path, text):
    path.write_text(text)
    return str(path)


def gen(tmp_path, body, name="inst.json", extra=()):
    cfg = write(tmp_path / f"{name}.ini", body)
    out = tmp_path / name
    assert main(["gen", "--config", cfg, "--out", str(out), *extra]) == 0
    return out


def test_gen_example1_matches_golden(tmp_path, capsys):
    out = gen(tmp_path, "[instance]\ngenerator = example1\n")
    assert out.read_text() == (GOLDEN / "example1.json").read_text()
    digest = capsys.readouterr().out.strip()
    assert len(digest) == 64


def test_gen_hash_is_stable(tmp_path, capsys):
    body = "[instance]\ngenerator = synthetic\nkind = subset\nn = 6\nk = 2\nq = 0.5\nseed = 4\n"
    gen(tmp_path, body, "a.json")
    gen(tmp_path, body, "b.json")
    first, second = capsys.readouterr().out.split()
    assert first == second
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_unknown_key_is_named(tmp_path, capsys):
    cfg = write(tmp_path / "c.ini", "[instance]\ngenerator = example1\nbogus_key = 3\n")
    assert main(["gen", "--config", cfg, "--out", str(tmp_path / "x.json")]) == 2
    assert "bogus_key" in capsys.readouterr().err


def test_unknown_reward_kind_is_rejected(tmp_path, capsys):
    cfg = write(tmp_path / "c.ini", "[instance]\nkind = cubic\nn = 3\n")
    assert main(["gen", "--config", cfg, "--out", str(tmp_path / "x.json")]) == 2
    assert "cubic" in capsys.readouterr().err


def test_unknown_policy_param_is_named(tmp_path, capsys):
    inst = gen(tmp_path, "[instance]\ngenerator = example1\n")
    cfg = write(tmp_path / "r.ini", "[policies.Greedy]\nspeed = 3\n")
    assert main(["run", str(inst), "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "speed" in capsys.readouterr().err


RUN_CFG = """[experiment]
horizon = 50
seeds = 2
trials = 2
initial_state_rule = fixed
initial_state = 1,1,1,1

[policies.Random]
[policies.LinearWhittle]
[policies.Optimal]
"""


def summary(out_dir):
    return {r["policy"]: r for r in csv.DictReader(io.StringIO((out_dir / "summary.csv").read_text()))}


def test_run_example1_ratio_and_rerun(tmp_path):
    inst = gen(tmp_path, "[instance]\ngenerator = example1\ntransitions = identity\n")
    cfg = write(tmp_path / "r.ini", RUN_CFG)
    for out in ("o1", "o2"):
        assert main(["run", str(inst), "--config", cfg, "--out", str(tmp_path / out), "--jobs", "1"]) == 0
    s = summary(tmp_path / "o1")
    ratio = float(s["LinearWhittle"]["mean_normalized"]) / float(s["Optimal"]["mean_normalized"])
    assert ratio == pytest.approx(0.75, abs=1e-6)
    for name in ("results.csv", "summary.csv", "summary.md"):
        assert (tmp_path / "o1" / name).read_bytes() == (tmp_path / "o2" / name).read_bytes()


def test_run_random_only(tmp_path):
    inst = gen(tmp_path, "[instance]\nkind = max\nn = 4\nseed = 1\n")
    cfg = write(tmp_path / "r.ini", "[experiment]\nhorizon = 10\nseeds = 2\ntrials = 2\n[policies.Random]\n")
    assert main(["run", str(inst), "--config", cfg, "--out", str(tmp_path / "o"), "--jobs", "1"]) == 0
    assert float(summary(tmp_path / "o")["Random"]["mean_normalized"]) == pytest.approx(1.0)


def test_run_reports_capped_policy_and_continues(tmp_path, capsys):
    inst = gen(tmp_path, "[instance]\nkind = linear\nn = 6\nseed = 1\n")
    cfg = write(tmp_path / "r.ini", "[experiment]\nhorizon = 3\nseeds = 1\ntrials = 1\n"
                                    "[policies.Optimal]\n[policies.Greedy]\n")
    assert main(["run", str(inst), "--config", cfg, "--out", str(tmp_path / "o"), "--jobs", "1"]) == 0
    assert "Optimal" in capsys.readouterr().err
    assert "Greedy" in summary(tmp_path / "o")


def test_named_policy_sections_with_params(tmp_path):
    inst = gen(tmp_path, "[instance]\nkind = subset\nn = 4\nseed = 2\n")
    cfg = write(tmp_path / "r.ini", "[experiment]\nhorizon = 3\nseeds = 1\ntrials = 1\n"
                                    "[policies.fast]\nkind = MctsShapley\nmcts_iterations = 10\n"
                                    "shapley_samples = 20\nexploration = classic\n")
    assert main(["run", str(inst), "--config", cfg, "--out", str(tmp_path / "o"), "--jobs", "1"]) == 0
    assert "fast" in summary(tmp_path / "o")


def test_bounds_csv(tmp_path, capsys):
    inst = gen(tmp_path, "[instance]\ngenerator = example1\n")
    capsys.readouterr()
    assert main(["bounds", str(inst)]) == 0
    rows = dict(csv.reader(io.StringIO(capsys.readouterr().out)))
    assert rows.pop("bound") == "value"
    assert float(rows["beta_linear"]) == pytest.approx(0.5)
    assert float(rows["theta_linear"]) == pytest.approx(0.75)


def test_bounds_linear_reward_all_one(tmp_path):
    inst = gen(tmp_path, "[instance]\nkind = linear\nn = 4\nalpha = 0.0\nseed = 3\n")
    out = tmp_path / "b.csv"
    assert main(["bounds", str(inst), "--out", str(out)]) == 0
    rows = list(csv.DictReader(io.StringIO(out.read_text())))
    assert [r["bound"] for r in rows] == ["beta_linear", "beta_shapley", "theta_linear", "theta_shapley"]
    assert all(float(r["value"]) == pytest.approx(1.0) for r in rows)


def test_ingest(tmp_path, capsys):
    log = tmp_path / "log.csv"
    log.write_bytes(gen_synthetic_log(40, 20, 3))
    cfg = write(tmp_path / "i.ini", "[ingest]\nn_clusters = 4\nbudget = 3\n")
    assert main(["ingest", str(log), "--config", cfg, "--out", str(tmp_path / "inst.json")]) == 0
    assert "excluded" in capsys.readouterr().err
    bad = tmp_path / "bad.csv"
    bad.write_text("volunteer_id,period,notified,completed\nv,0,1\n")
    assert main(["ingest", str(bad), "--out", str(tmp_path / "x.json")]) == 2
    assert "line 2" in capsys.readouterr().err


def test_seed_precedence(tmp_path, monkeypatch, capsys):
    body = "[instance]\nkind = probability\nn = 4\nseed = 1\n"
    gen(tmp_path, body, "cfg.json")
    monkeypatch.setenv("RMABG_SEED", "2")
    gen(tmp_path, body, "env.json")
    gen(tmp_path, body, "flag.json", extra=("--seed", "1"))
    cfg_hash, env_hash, flag_hash = capsys.readouterr().out.split()
    assert env_hash != cfg_hash and flag_hash == cfg_hash


def test_console_entry_point(tmp_path):
    cfg = write(tmp_path / "c.ini", "[instance]\ngenerator = example1\n")
    out = tmp_path / "e.json"
    proc = subprocess.run([sys.executable, "-m", "rmabg", "gen", "--config", cfg, "--out", str(out)],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0 and out.read_text() == (GOLDEN / "example1.json").read_text()


def test_inline_comments_in_config(tmp_path):
    plain = gen(tmp_path, "[instance]\nkind = max\nn = 4\nseed = 2\n", "plain.json")
    commented = gen(tmp_path, "[instance]\nkind = max   ; reward family\nn = 4\nseed = 2  # fixed\n",
                    "commented.json")
    assert plain.read_bytes() == commented.read_bytes()
