from __future__ import annotations

import io

import pytest

from cyanrep.cli import main

from conftest import FIXTURES


def cli(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = main([str(a) for a in argv], out=out, err=err)
    return code, out.getvalue(), err.getvalue()


def test_expand_writes_one_file_per_prototype(tmp_path):
    code, out, _ = cli("expand", FIXTURES / "replicated_info", "--out", tmp_path)
    assert code == 0
    assert sorted(p.name for p in tmp_path.iterdir()) == ["Info.cyn", "InfosetText.cyn", "Program.cyn"]
    assert out.splitlines()[0].endswith("Info.cyn")


def test_check_clean_and_flagged():
    assert cli("check", FIXTURES / "replicated_info")[0] == 0
    code, _, err = cli("check", FIXTURES / "nondeterministic")
    assert code == 1 and "System.currentTimeMillis" in err


def test_run_prints_program_output():
    code, out, _ = cli("run", FIXTURES / "person_init")
    assert code == 0 and out == "Meg\n4\n"


def test_compile_errors_exit_one(tmp_path):
    bad = tmp_path / "Bad.cyn"
    bad.write_text("object Bad\n func f { self zork }\nend\n")
    code, out, err = cli("check", bad)
    assert code == 1 and out == "" and "does not understand" in err


@pytest.mark.parametrize("argv", [
    ("simulate", FIXTURES / "replicated_board", "--drop", "2"),
    ("simulate", FIXTURES / "replicated_board", "--seed", "-1"),
    ("simulate", FIXTURES / "replicated_board", "--delay", "9..3"),
    ("simulate", FIXTURES / "replicated_board", "--script", "/nonexistent"),
    ("simulate", FIXTURES / "replicated_board", "--replicas", "0"),
    ("check", "/nonexistent"),
    ("check", FIXTURES / "replicated_info", "--nondet", "/nonexistent"),
    ("frobnicate",),
])
def test_usage_errors_exit_two(argv):
    assert cli(*argv)[0] == 2


def test_bad_registry_exits_one(tmp_path):
    reg = tmp_path / "r.registry"
    reg.write_text("only-one-word\n")
    assert cli("check", FIXTURES / "replicated_info", "--nondet", reg)[0] == 1


def test_simulate_reports_convergence(tmp_path):
    script = tmp_path / "s.script"
    script.write_text('100 0 Board append: "x"\n150 1 Board add: 4\n200 2 Board tag:value: "k", 1\n')
    code, out, err = cli("simulate", FIXTURES / "replicated_board", "--script", script,
                         "--seed", 3, "--drop", 0.1, "--trace")
    lines = out.splitlines()
    assert code == 0 and lines[-1] == "CONVERGED"
    states = [l for l in lines if l.startswith("replica ")]
    assert len(states) == 3 and len({s.split(": ", 1)[1] for s in states}) == 1
    assert any(" deliver " in l for l in lines)


def test_simulate_detects_divergence(tmp_path):
    script = tmp_path / "s.script"
    script.write_text("100 0 Info setNumber: 4\n")
    code, out, err = cli("simulate", FIXTURES / "replicated_info", "--script", script)
    assert code == 1 and out.splitlines()[-1] == "DIVERGED"


def test_simulate_liveness_timeout(tmp_path):
    script = tmp_path / "s.script"
    script.write_text("100 0 Board add: 1\n")
    code, out, _ = cli("simulate", FIXTURES / "replicated_board", "--script", script,
                       "--drop", 1.0, "--max-time", 5000)
    assert code == 1 and out.splitlines()[-1] == "LIVENESS TIMEOUT"
