import json
import subprocess
import sys

import pytest

from eager_reserves.cli import main

DATA = "auction_id,weight,buyer_id,bid\na1,1.0,0,3\na1,1.0,1,2\na2,1.0,0,1\na2,1.0,1,5\n"


@pytest.fixture
def dataset(tmp_path):
    p = tmp_path / "ds.csv"
    p.write_text(DATA)
    return str(p)


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_solve_round_check(tmp_path, dataset, capsys):
    sol = tmp_path / "sol.json"
    code, _, _ = run(["solve-lp", dataset, "--out", str(sol)], capsys)
    assert code == 0
    obj = json.loads(sol.read_text())
    assert obj["status"] == "optimal" and obj["objective"] == pytest.approx(8.0)
    assert "grid" in obj and obj["max_residual"] <= 1e-7

    code, out, _ = run(["round", dataset, str(sol), "--samples", "100", "--seed", "3"], capsys)
    assert code == 0
    r = json.loads(out)
    assert r["samples"] == 100 and r["estimate"] <= r["lp_objective"] + 1e-9
    code, out2, _ = run(["round", dataset, str(sol), "--samples", "100", "--seed", "3"], capsys)
    assert out2 == out

    code, out, _ = run(["check-conditions", dataset, str(sol)], capsys)
    assert code == 0
    c = json.loads(out)
    assert c["feasible"] and c["zero_reserve_revenue"] == 3.0
    assert len(c["auctions"]) == 2


def test_greedy_and_brute_force(dataset, capsys):
    code, out, _ = run(["brute-force", dataset], capsys)
    assert code == 0
    obj = json.loads(out)
    assert obj["revenue"] == 8.0 and obj["reserves"] == {"0": 3.0, "1": 5.0}
    code, out, _ = run(["greedy", dataset, "--grid", "shared_bids"], capsys)
    assert code == 0
    assert json.loads(out)["reserves"] == {"0": 3.0, "1": 5.0}


def test_gen_families(tmp_path, capsys):
    out = tmp_path / "ln.csv"
    assert main(["gen", "lognormal", "--mu", "0.5", "--w", "0.2", "--auctions", "10", "--seed", "1",
                 "--out", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 1 + 20
    assert json.loads(out.with_suffix(".meta.json").read_text())["w"] == 0.2

    gap = tmp_path / "gap.json"
    assert main(["gen", "gap", "--n", "4", "--out", str(gap)]) == 0
    meta = json.loads(gap.with_suffix(".meta.json").read_text())
    assert meta["family"] == "gap" and meta["esp_star"] > 0
    assert len(json.loads(gap.read_text())["auctions"]) == 10

    tight = tmp_path / "tight.csv"
    assert main(["gen", "tight", "--k", "5", "--out", str(tight)]) == 0
    meta = json.loads(tight.with_suffix(".meta.json").read_text())
    sol = tight.with_suffix(".solution.json")
    assert meta["solution"] == sol.name
    code, out, _ = run(["check-conditions", str(tight), str(sol), "--tol", "1e-12"], capsys)
    assert code == 0 and json.loads(out)["feasible"]


def test_experiment_command(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"ws": [0.0], "train_auctions": 15, "grid_size": 5, "test_auctions": 15}))
    out = tmp_path / "res"
    code, stdout, err = run(["experiment", "--config", str(cfg), "--seed", "9", "--out", str(out),
                             "--instances-per-w", "1", "--test-sets", "2", "--samples", "20", "--plots"], capsys)
    assert code == 0
    assert "instance 0: ok" in err
    names = sorted(p.name for p in out.iterdir())
    assert names == ["per_instance.csv", "per_testset.csv", "summary.json", "test_gain_box.svg",
                     "training_ratio_box.svg"]
    assert stdout.count("\n") == 5
    summary = json.loads((out / "summary.json").read_text())
    assert summary["config"]["seed"] == 9 and summary["config"]["test_sets"] == 2


def test_verify_theory(tmp_path, capsys):
    table = tmp_path / "theory.csv"
    code, out, _ = run(["verify-theory", "--out", str(table)], capsys)
    assert code == 0
    assert "FAIL" not in out and out.count("PASS") >= 8
    assert table.read_text().splitlines()[0] == "check,passed,detail"


def test_exit_codes(tmp_path, dataset, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("a1,1.0,0,-1\n")
    assert run(["solve-lp", str(bad)], capsys)[0] == 1
    code, _, err = run(["solve-lp", str(tmp_path / "missing.csv")], capsys)
    assert code == 1 and "error" in err
    code, _, err = run(["solve-lp", dataset, "--max-iters", "1"], capsys)
    assert code == 2 and "solver error" in err
    code, _, err = run(["brute-force", dataset, "--cap", "3"], capsys)
    assert code == 1 and "cap" in err
    code, _, _ = run(["solve-lp", dataset, "--max-variables", "2"], capsys)
    assert code == 1
    notjson = tmp_path / "x.json"
    notjson.write_text("{")
    assert run(["round", dataset, str(notjson), "--samples", "5", "--seed", "1"], capsys)[0] == 1
    with pytest.raises(SystemExit):
        main(["round", dataset])


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "eager_reserves.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    for cmd in ("solve-lp", "round", "greedy", "brute-force", "gen", "experiment", "verify-theory",
                "check-conditions"):
        assert cmd in proc.stdout
