import json

import pytest

from hpttp.cli import main


@pytest.fixture
def micro_file(tmp_path):
    path = tmp_path / "micro.json"
    assert main(["gen", "micro", "--seed", "3", "--out", str(path)]) == 0
    return path


def test_gen_writes_loadable_instance(tmp_path):
    path = tmp_path / "toy.json"
    assert main(["gen", "toy", "--out", str(path)]) == 0
    data = json.loads(path.read_text())
    assert len(data["stations"]) == 8


def test_net_stats_and_prep(micro_file, capsys):
    assert main(["net", "stats", "--instance", str(micro_file)]) == 0
    assert "train subnetwork arcs" in capsys.readouterr().out
    assert main(["prep", "--instance", str(micro_file), "--prep", "pax,trains"]) == 0
    out = capsys.readouterr().out
    assert "removed" in out and "passenger" in out


@pytest.mark.parametrize("extra", [[], ["--formulation", "arc"], ["--formulation", "path"],
                                   ["--mode", "lp-oc-2", "--cg", "standard"], ["--psr-fix", "2"],
                                   ["--psr-delete", "2"], ["--none-routed"]])
def test_solve_then_validate_and_report(micro_file, tmp_path, extra, capsys):
    out = tmp_path / "out"
    assert main(["solve", "--instance", str(micro_file), "--out", str(out)] + extra) == 0
    assert "validation PASS" in capsys.readouterr().out
    sol = out / "solution.json"
    assert sol.exists() and (out / "solution_diagram.svg").exists()
    assert main(["validate", "--instance", str(micro_file), "--report", str(sol)]) == 0
    assert main(["report", "--instance", str(micro_file), "--report", str(sol),
                 "--out", str(tmp_path / "again")]) == 0
    assert (tmp_path / "again" / "solution_trace.csv").exists()


def test_corrupt_report_fails_validation(micro_file, tmp_path):
    out = tmp_path / "out"
    main(["solve", "--instance", str(micro_file), "--formulation", "arc", "--out", str(out)])
    sol = out / "solution.json"
    data = json.loads(sol.read_text())
    data["objective"] += 100.0
    sol.write_text(json.dumps(data))
    assert main(["validate", "--instance", str(micro_file), "--report", str(sol)]) == 1
    assert main(["report", "--instance", str(micro_file), "--report", str(sol),
                 "--out", str(tmp_path / "r")]) == 1
    assert not (tmp_path / "r" / "solution.json").exists()


def test_zero_time_limit_exit_code(tmp_path):
    path = tmp_path / "peaked.json"
    assert main(["gen", "peaked", "--seed", "0", "--xi", "0.6", "--out", str(path)]) == 0
    assert main(["solve", "--instance", str(path), "--timelimit", "0"]) == 4


def test_bad_arguments(micro_file, tmp_path):
    with pytest.raises(SystemExit):
        main(["prep", "--instance", str(micro_file), "--prep", "everything"])
    with pytest.raises(SystemExit):
        main(["solve", "--instance", str(micro_file), "--mode", "fast"])
    assert main(["solve", "--instance", str(tmp_path / "missing.json")]) == 1
