import json

import numpy as np
import pytest

from kmace.cli import main


def run(capsys, *args):
    code = main(list(args))
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def s1_csv(tmp_path, capsys):
    path = tmp_path / "s1.csv"
    assert run(capsys, "generate", "s1", "--seed", "7", "-o", str(path))[0] == 0
    return path


def test_generate(s1_csv, tmp_path, capsys):
    lines = s1_csv.read_text().splitlines()
    assert len(lines) == 901
    side = json.loads(s1_csv.with_suffix(".json").read_text())
    assert side["true_m"] == 9 and side["seed"] == 7
    again = tmp_path / "again" / "s1.csv"
    again.parent.mkdir()
    run(capsys, "generate", "s1", "--seed", "7", "-o", str(again))
    assert again.read_bytes() == s1_csv.read_bytes()
    assert again.with_suffix(".json").read_bytes() == s1_csv.with_suffix(".json").read_bytes()


def test_generate_bad_path(capsys, tmp_path):
    code, _, err = run(capsys, "generate", "s1", "-o", str(tmp_path / "missing" / "x.csv"))
    assert code == 2 and "Error" in err


def test_select(s1_csv, tmp_path, capsys):
    out = tmp_path / "r.json"
    assert run(capsys, "select", str(s1_csv), "--m-min", "2", "--m-max", "12", "-o", str(out))[0] == 0
    doc = json.loads(out.read_text())
    assert doc["m_hat"] == 9
    assert doc["args"]["m_min"] == 2 and doc["input"]["n"] == 900
    out2 = tmp_path / "r2.json"
    run(capsys, "select", str(s1_csv), "--m-min", "2", "--m-max", "12", "-o", str(out2))
    assert out.read_bytes() == out2.read_bytes()
    code, text, _ = run(capsys, "select", str(s1_csv), "--m-min", "4", "--m-max", "4")
    assert code == 0 and json.loads(text)["m_hat"] == 4
    code, text, _ = run(capsys, "select", str(s1_csv), "--m-max", "5", "--format", "csv")
    assert code == 0 and text.splitlines()[0] == "m,z_upper,z_lower" and len(text.splitlines()) == 6


def test_select_kernel(s1_csv, capsys):
    code, text, _ = run(capsys, "select", str(s1_csv), "--method", "kernel-kmace",
                        "--m-max", "10", "--sigma-grid", "4:16:3")
    doc = json.loads(text)
    assert code == 0 and doc["sigma_sweep"]["grid"] == [4.0, 10.0, 16.0]
    assert doc["report"]["params"]["sigma"] == doc["sigma_sweep"]["sigma_hat"]


def test_exit_codes(s1_csv, tmp_path, capsys):
    assert run(capsys, "select", str(s1_csv), "--m-min", "5", "--m-max", "2")[0] == 1
    assert run(capsys, "select", str(s1_csv), "--sigma-grid", "oops", "--method", "kernel-kmace")[0] == 1
    assert run(capsys, "nosuch")[0] == 1
    assert run(capsys, "generate", "nosuch", "-o", str(tmp_path / "a.csv"))[0] == 1
    bad = tmp_path / "bad.csv"
    bad.write_text("x0,x1\n1,2\n3,abc\n")
    code, _, err = run(capsys, "select", str(bad))
    assert code == 2 and "line 3" in err
    assert run(capsys, "--help")[0] == 0


def test_bench(capsys, tmp_path):
    code, text, _ = run(capsys, "bench", "s1", "--runs", "1", "--m-max", "10")
    rows = text.splitlines()
    assert code == 0 and rows[0] == "method,m_hat_mean,m_hat_std,accuracy,ari,nvi"
    method, mean, std, acc, a, v = rows[1].split(",")
    assert (method, float(mean), float(std), float(acc)) == ("kmace", 9.0, 0.0, 100.0)
    out = tmp_path / "b.json"
    assert run(capsys, "bench", "s1", "--runs", "2", "--seed", "5", "--m-max", "10",
               "--format", "json", "-o", str(out))[0] == 0
    doc = json.loads(out.read_text())
    assert [r["seed"] for r in doc["runs"]["kmace"]] == [5, 6]


def test_bench_thread_env(monkeypatch, capsys):
    monkeypatch.setenv("KMACE_THREADS", "x")
    assert run(capsys, "bench", "s1", "--runs", "1")[0] == 1


def test_mc_oracle(tmp_path, capsys):
    out = tmp_path / "mc.json"
    assert run(capsys, "mc-oracle", "--random", "2", "--draws", "20000", "-o", str(out))[0] == 0
    assert json.loads(out.read_text())["passed"] is True
    code, _, err = run(capsys, "mc-oracle", "--random", "1", "--draws", "20000", "--perturb", "0.1")
    assert code == 3 and "FAIL" in err
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"n": 4, "d": 2, "spectra": [0.0, 0.0], "draws": 100}))
    code, text, _ = run(capsys, "mc-oracle", str(cfg))
    assert code == 0 and json.loads(text)["results"][0]["checks"][0]["estimate"] == 0.0
    cfg.write_text("{not json")
    assert run(capsys, "mc-oracle", str(cfg))[0] == 1
    assert run(capsys, "mc-oracle")[0] == 1


def test_evaluate(tmp_path, capsys):
    t = tmp_path / "t.csv"
    p = tmp_path / "p.csv"
    t.write_text("label\n0\n0\n1\n1\n")
    p.write_text("x,label\n1.0,7\n2.0,7\n3.0,3\n4.0,3\n")
    code, text, _ = run(capsys, "evaluate", str(t), str(p))
    doc = json.loads(text)
    assert code == 0 and doc["ari"] == 1.0 and doc["nvi"] == 0.0
    p.write_text("label\n0\n1\n")
    assert run(capsys, "evaluate", str(t), str(p))[0] == 2
    code, text, _ = run(capsys, "evaluate", str(t), str(t), "--format", "csv")
    assert text.splitlines()[0] == "ari,nvi,n"
