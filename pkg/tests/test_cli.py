import json
import logging

import pytest

from blochmps.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    return code, capsys.readouterr().out


FAST = ["--restarts", "1", "--max-iters", "200"]


def test_ground_is_deterministic(tmp_path, capsys):
    args = ["ground", "--model", "ising", "--g", "0.8", "-N", "6", "-D", "2", *FAST]
    assert run(capsys, *args, "--out", str(tmp_path / "a.json"))[0] == 0
    assert run(capsys, *args, "--out", str(tmp_path / "b.json"))[0] == 0
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    summary = json.loads((tmp_path / "a.summary.json").read_text())
    assert summary["n_sites"] == 6 and summary["D"] == 2


def test_config_file_and_flag_override(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"model": "ising", "g": 0.5, "n_sites": 8, "D": 2, "restarts": 1}))
    code, out = run(capsys, "ground", "--config", str(cfg), "-N", "6", "--max-iters", "100")
    assert code == 0
    doc = json.loads(out)
    assert doc["n_sites"] == 6
    assert doc["model"]["params"]["g"] == 0.5


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"gamma": 1}))
    assert run(capsys, "ground", "--config", str(cfg))[0] == 2


@pytest.mark.parametrize(
    "argv",
    [
        ["dispersion", "--out-dir", "/nonexistent/dir"],
        ["dispersion", "--tensor", "/nonexistent/a.json"],
        ["dispersion", "--model", "heisenberg", "-N", "7"],
        ["ground", "-D", "0"],
        ["compare"],
    ],
)
def test_validation_exit_code(argv, capsys):
    assert run(capsys, *argv)[0] == 2


def test_budget_refusal_exit_code(tmp_path, capsys):
    argv = ["dispersion", "-N", "8", "-D", "3", "--memory-budget", "0.01", "--out-dir", str(tmp_path), *FAST]
    assert run(capsys, *argv)[0] == 4


def test_dispersion_exact_compare(tmp_path, capsys, caplog):
    base = ["--model", "ising", "--g", "1.0", "-N", "6"]
    assert run(capsys, "ground", *base, "-D", "2", "--restarts", "2", "--out", str(tmp_path / "a.json"))[0] == 0
    disp = ["dispersion", *base, "--tensor", str(tmp_path / "a.json"), "-b", "2",
            "--cache-dir", str(tmp_path / "cache"), "--out-dir", str(tmp_path)]
    assert run(capsys, *disp)[0] == 0
    with caplog.at_level(logging.INFO):
        code, out = run(capsys, *disp)
    assert code == 0
    assert "network build skipped" in caplog.text
    assert json.loads(out)["timings"]["cache_hit"] is True
    csv_text = (tmp_path / "dispersion_ising_N6_D2.csv").read_text()
    assert len(csv_text.strip().splitlines()) == 3 + 12

    assert run(capsys, "exact", *base, "--out-dir", str(tmp_path))[0] == 0
    assert run(capsys, "exact", *base, "--exact-method", "ising-analytic", "--levels", "10",
               "--out-dir", str(tmp_path))[0] == 0
    code, out = run(capsys, "compare", "--mps", str(tmp_path / "dispersion_ising_N6_D2.json"),
                    "--exact", str(tmp_path / "exact_ed_ising_N6.json"), "--angles")
    assert code == 0
    report = json.loads(out)
    assert report["violations"] == []
    assert len(report["angles"]) == 6


def test_compare_rejects_mismatched_model(tmp_path, capsys):
    assert run(capsys, "ground", "--g", "1.0", "-N", "6", "-D", "2", *FAST, "--out", str(tmp_path / "a.json"))[0] == 0
    assert run(capsys, "dispersion", "--g", "1.0", "-N", "6", "--tensor", str(tmp_path / "a.json"),
               "--out-dir", str(tmp_path))[0] == 0
    assert run(capsys, "exact", "--g", "0.5", "-N", "6", "--out-dir", str(tmp_path))[0] == 0
    code, _ = run(capsys, "compare", "--mps", str(tmp_path / "dispersion_ising_N6_D2.json"),
                  "--exact", str(tmp_path / "exact_ed_ising_N6.json"))
    assert code == 2


@pytest.mark.filterwarnings("ignore::blochmps.errors.ParityWarning")
def test_heisenberg_dispersion(tmp_path, capsys):
    code, _ = run(capsys, "dispersion", "--model", "heisenberg", "-N", "6", "-D", "2", "-b", "1",
                  "--restarts", "1", "--out-dir", str(tmp_path))
    assert code == 0
    rows = (tmp_path / "dispersion_heisenberg_N6_D2.csv").read_text().strip().splitlines()
    assert rows[2] == "k,branch,energy,discarded,parity,k_relabel"


def test_bench(capsys):
    code, out = run(capsys, "bench", "-N", "6", "--d-list", "2", "3", "--repeats", "1")
    assert code == 0
    assert set(json.loads(out)["ratios"]) == {"2->3"}
