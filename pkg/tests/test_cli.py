import csv
import io
import json

import pytest

from mcflow.cli import main, run
from mcflow.generate import gen_instance, random_instance
from mcflow.graphcore import parse_instance
from mcflow.refsolve import lp_concurrent_oracle

SAMPLE = """\
p mcf 4 5 2
a 1 2 2.0
a 2 3 1.0
a 3 4 2.0
a 4 1 1.0
a 1 3 1.5
d 1 1 3 1.0
d 2 2 4 0.5
"""
FAST = ["--n-outer", "30", "--n-inner", "50", "--rho-inner", "3"]


@pytest.fixture
def sample(tmp_path):
    p = tmp_path / "sample.mcf"
    p.write_text(SAMPLE)
    return str(p)


def run_json(argv, capsys):
    code = run(argv)
    out = capsys.readouterr().out
    return code, json.loads(out) if out.strip() else None


def strip_time(rep):
    rep = dict(rep)
    rep.pop("wall_time")
    return rep


def test_solve_concurrent_json(sample, capsys):
    code, rep = run_json(["solve-concurrent", sample, "--epsilon", "0.1", "--outer", "mmw", "--output", "json"] + FAST,
                         capsys)
    assert code == 0
    assert rep["schema"] == 1 and rep["status"] == "ok"
    assert rep["lambda"] > 0 and rep["max_congestion"] <= 1.3
    assert rep["instance"] == {"file": "sample.mcf", "k": 2, "m": 5, "n": 4}


def test_report_is_deterministic(sample, capsys):
    argv = ["solve-concurrent", sample, "--outer", "signs"] + FAST
    _, a = run_json(argv, capsys)
    _, b = run_json(argv, capsys)
    assert strip_time(a) == strip_time(b)


def test_fail_exit_code(sample, capsys):
    code, rep = run_json(["solve-concurrent", sample, "--scale", "50"] + FAST, capsys)
    assert code == 1 and rep["status"] == "fail"


def test_usage_exit_codes(tmp_path, sample, capsys):
    assert run(["solve-concurrent", str(tmp_path / "missing.mcf")]) == 2
    assert run(["no-such-command"]) == 2
    assert run(["solve-concurrent", sample, "--epsilon", "0.9"]) == 2
    bad = tmp_path / "bad.mcf"
    bad.write_text("p mcf 2 2 1\na 1 2 1\nd 1 1 2 1\n")
    assert run(["coupled", str(bad)]) == 2
    assert run(["solve-weighted", sample, "--weights", "1"]) == 2
    capsys.readouterr()


def test_solver_error_exit_code(sample, capsys):
    assert run(["capacitated", sample, "--rho-inner", "1e-6", "--n-inner", "3"]) == 3
    capsys.readouterr()


def test_coupled_and_capacitated(sample, capsys):
    code, rep = run_json(["coupled", sample, "--delta", "1e-4"], capsys)
    assert code == 0
    assert rep["conservation_residual"] <= 1e-8
    assert abs(rep["energy"] - rep["potential_energy"]) <= 3e-4 * rep["potential_energy"]
    code, rep = run_json(["capacitated", sample] + FAST, capsys)
    assert code in (0, 1) and rep["status"] in ("ok", "fail", "unconverged")


def test_csv_trace(sample, capsys):
    assert run(["solve-concurrent", sample, "--output", "csv"] + FAST) == 0
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert rows and "t" in rows[0] and any(r["congestion"] for r in rows)


def test_config_file_defaults_and_flag_precedence(tmp_path, sample, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"epsilon": 0.2, "n_outer": 30, "n_inner": 50, "rho_inner": 3.0, "outer": "signs"}))
    _, rep = run_json(["solve-concurrent", sample, "--config", str(cfg)], capsys)
    assert rep["config"]["epsilon"] == 0.2 and rep["config"]["outer"] == "signs"
    _, rep = run_json(["solve-concurrent", sample, "--config", str(cfg), "--epsilon", "0.1"], capsys)
    assert rep["config"]["epsilon"] == 0.1 and rep["config"]["n_outer"] == 30
    cfg.write_text(json.dumps({"bogus": 1}))
    assert run(["solve-concurrent", sample, "--config", str(cfg)]) == 2
    capsys.readouterr()


def test_out_path(tmp_path, sample, capsys):
    out = tmp_path / "rep.json"
    assert run(["coupled", sample, "--out", str(out)]) == 0
    assert capsys.readouterr().out == ""
    assert json.loads(out.read_text())["status"] == "ok"


def test_gen_determinism_and_minimal(capsys):
    assert run(["gen", "--n", "6", "--m", "9", "--k", "2", "--seed", "7"]) == 0
    a = capsys.readouterr().out
    run(["gen", "--n", "6", "--m", "9", "--k", "2", "--seed", "7"])
    assert capsys.readouterr().out == a
    inst = parse_instance(gen_instance(0, 2, 1, 1))
    assert (inst.n, inst.m, inst.k) == (2, 1, 1)
    assert run(["gen", "--n", "5", "--m", "2", "--k", "1"]) == 2
    capsys.readouterr()


@pytest.mark.parametrize("seed", range(5))
def test_planted_profile_is_routable(seed):
    eps = 0.1
    inst = random_instance(seed, 7, 11, 3, "planted", eps)
    assert lp_concurrent_oracle(inst) >= 1 / (1 - 2 * eps) * (1 - 1e-9)


def test_verify(sample, capsys):
    code, rep = run_json(["verify", sample] + FAST, capsys)
    assert code == 0 and rep["agree"]
    assert set(rep["outers"]) == {"mmw", "signs"}


def test_weighted_command(sample, capsys):
    code, rep = run_json(["solve-weighted", sample, "--weights", "2,1"] + FAST, capsys)
    assert code == 0 and rep["objective"] > 0


def test_bench_rows(capsys):
    code, rep = run_json(["bench", "--sizes", "6,10", "--k", "1", "--repeats", "1"] + FAST, capsys)
    assert code == 0
    assert [r["m"] for r in rep["runs"]] == [6, 10]
    assert all(r["outer_iterations"] >= 1 for r in rep["runs"])


def test_main_exits_with_code(monkeypatch):
    monkeypatch.setattr("sys.argv", ["mcflow", "no-such-command"])
    with pytest.raises(SystemExit) as info:
        main()
    assert info.value.code == 2
