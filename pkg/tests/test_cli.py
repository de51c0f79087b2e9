from fractions import Fraction

import pytest

from dyadot.cli import main
from dyadot.martingale import read_martingale


@pytest.fixture
def measure_file(tmp_path):
    p = tmp_path / "a.txt"
    p.write_text("dim 1\n1/2 0\n1/2 1\n")
    return str(p)


def test_wasserstein_self_distance(measure_file, capsys):
    assert main(["wasserstein", "--mu", measure_file, "--nu", measure_file, "-p", "2"]) == 0
    assert capsys.readouterr().out == "0/1\n"


def test_wasserstein_histogram_input(tmp_path, measure_file, capsys):
    h = tmp_path / "h.txt"
    h.write_text("dim 1\ndepth 1\n0 1/2\n1 1/2\n")
    assert main(["wasserstein", "--mu", str(h), "--nu", measure_file, "-p", "1"]) == 0
    assert capsys.readouterr().out.strip() == "1/4"


def test_build_martingale_file(tmp_path):
    out = tmp_path / "m.txt"
    code = main(["build-martingale", "--p", "3", "--q", "2", "--k", "0", "--depth", "12",
                 "--target", "010101010101", "--out", str(out)])
    assert code == 0
    M = read_martingale(out.read_text())
    assert M.depth == 12 and M.check_fairness_sparse() > 0


def test_exit_codes(tmp_path, measure_file):
    assert main(["wasserstein", "--mu", measure_file, "--nu", measure_file, "--bogus"]) == 1
    assert main([]) == 1
    assert main(["wasserstein", "--mu", str(tmp_path / "none"), "--nu", measure_file]) == 2
    assert main(["build-martingale", "--p", "3", "--q", "2", "--k", "1", "--target", "01"]) == 3
    h = tmp_path / "h.txt"
    h.write_text("dim 1\ndepth 1\n0 1/2\n1 1/2\n")
    assert main(["brenier-solve", "--mu", str(h), "--precision", "4", "--budget", "1",
                 "--gap-tol", "1/1000000000000", "--out", str(tmp_path / "phi")]) == 4


def test_resolvent_and_probe(capsys):
    assert main(["resolvent", "--map", "identity:2", "--point", "1,1/3"]) == 0
    assert capsys.readouterr().out == "1/2 1/6\n"
    assert main(["diff-probe", "--map", "scale:2", "--point", "1/3", "--scales", "3..5", "--plot"]) == 0
    rows = capsys.readouterr().out.splitlines()
    assert len(rows) == 3 and all(len(r.split()) == 3 for r in rows)


def test_mltest_and_pipeline(tmp_path, capsys):
    out = tmp_path / "t.txt"
    assert main(["mltest", "--map", "scale:1/2", "--depth", "4", "--levels", "2", "--out", str(out)]) == 0
    assert out.read_text().startswith("levels 2\nV 0\n")
    cfg = tmp_path / "cfg"
    cfg.write_text("point = 1/3\nmap = identity\nscales = 3 4 5\n")
    a, b = tmp_path / "m1", tmp_path / "m2"
    assert main(["pipeline", "forward", "--config", str(cfg), "--out", str(a)]) == 0
    assert main(["pipeline", "forward", "--config", str(cfg), "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert main(["pipeline", "backward", "--config", str(cfg)]) == 2


def test_config_file(tmp_path, measure_file, capsys):
    cfg = tmp_path / "c"
    cfg.write_text("tol = 1/1000\npivot = bland\nseed = 3\n")
    assert main(["--config-file", str(cfg), "wasserstein", "--mu", measure_file, "--nu", measure_file]) == 0
    cfg.write_text("tol = -1\n")
    assert main(["--config-file", str(cfg), "wasserstein", "--mu", measure_file, "--nu", measure_file]) == 2


def test_wasserstein_certificate_and_root_interval(tmp_path, measure_file, capsys):
    b = tmp_path / "b.txt"
    b.write_text("dim 1\n1/2 1/4\n1/2 1/2\n")
    assert main(["wasserstein", "--mu", measure_file, "--nu", str(b), "-p", "2", "--certificate"]) == 0
    lines = capsys.readouterr().out.splitlines()
    # (1/4)^2/2 + (1/2)^2/2
    assert lines[0] == "5/32"
    assert lines[1].startswith("W_2 [")
    assert lines[-1] == "dual 5/32 verified True"


def test_brenier_emit_map(tmp_path, capsys):
    h = tmp_path / "h.txt"
    h.write_text("dim 1\ndepth 2\n00 1/8\n01 3/8\n10 3/8\n11 1/8\n")
    assert main(["brenier-solve", "--mu", str(h), "-i", "3", "--emit-map", "2"]) == 0
    out = capsys.readouterr().out
    table = out.split("gradient 2\n", 1)[1].split()
    assert len(table) == 8 and table[:2] == ["1/8", "1/16"]


def test_pipeline_manifest_reused_as_config(tmp_path):
    cfg = tmp_path / "back.cfg"
    cfg.write_text("p = 7\nq = 3/2\nk = 1\ntarget = " + "01" * 24 + "\n")
    first, second = tmp_path / "m1.txt", tmp_path / "m2.txt"
    assert main(["pipeline", "backward", "--config", str(cfg), "--out", str(first)]) == 0
    assert main(["pipeline", "backward", "--config", str(first), "--out", str(second)]) == 0
    assert first.read_text() == second.read_text()
    assert "verdict = oscillating" in first.read_text()
