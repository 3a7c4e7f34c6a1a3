from __future__ import annotations

import pytest

from cyanrep.cluster import Cluster, ScriptEntry, ScriptError, parse_script, serial_oracle
from cyanrep.netsim import NetConfig, Partition

from conftest import board_script, script_text


def test_parse_script():
    text = '# header\n\n10 0 Board append: "a b",\n20 2 Board tag:value: "k", -4\n30 1 Board reset\n'
    entries = parse_script(text)
    assert [(e.time, e.replica, e.selector, e.args, e.line) for e in entries] == [
        (10, 0, "append:", ("a b",), 3), (20, 2, "tag:value:", ("k", -4), 4), (30, 1, "reset", (), 5)]


@pytest.mark.parametrize("text", ["10 0 Board", "x 0 Board reset", "1 0 Board add: zz", '1 0 B a: "open'])
def test_bad_script_lines(text):
    with pytest.raises(ScriptError):
        parse_script(text)


def test_fault_free_run_matches_oracle(board_program):
    cluster = Cluster(board_program, config=NetConfig(seed=1))
    cluster.load_script(board_script(1, count=20))
    result = cluster.run()
    assert result.converged and not result.errors
    assert result.states[0] == serial_oracle(board_program, result.applied[0])
    assert len(result.applied[0]) == 20


def test_partition_heals_and_converges(board_program):
    config = NetConfig(seed=2, partitions=(Partition.parse("0..3000:0|1,2"),))
    cluster = Cluster(board_program, config=config)
    cluster.load_script(board_script(2, count=15, horizon=2000))
    result = cluster.run()
    assert result.converged
    assert len(result.applied[0]) == 15


def test_crash_and_restart_catches_up(board_program):
    cluster = Cluster(board_program, config=NetConfig(seed=3))
    cluster.load_script(board_script(3, count=20))
    cluster.schedule_crash(2, 3000, restart_at=9000)
    result = cluster.run()
    assert result.converged and set(result.states) == {0, 1, 2}
    assert cluster.replicas[2].incarnation >= 2


def test_script_on_down_replica_is_skipped(board_program):
    cluster = Cluster(board_program, config=NetConfig(seed=5))
    cluster.schedule_crash(1, 100)
    cluster.load_script([ScriptEntry(500, 1, "Board", "add:", (1,), 7),
                         ScriptEntry(600, 0, "Board", "add:", (2,), 8)])
    result = cluster.run()
    assert [e.line for e in result.skipped] == [7]
    assert result.converged and set(result.states) == {0, 2}


def test_replica_override_and_file_logs(board_program, tmp_path):
    cluster = Cluster(board_program, replicas=5, config=NetConfig(seed=6), log_dir=tmp_path)
    cluster.load_script(board_script(6, count=5, replicas=5))
    result = cluster.run()
    assert result.converged and len(result.states) == 5
    log = cluster.log_file(4)
    assert log == tmp_path / "var" / "tmp" / "board4" / "replica-4.log"
    assert log.stat().st_size > 0


def test_second_run_starts_from_empty_logs(board_program, tmp_path):
    def once():
        cluster = Cluster(board_program, config=NetConfig(seed=7), log_dir=tmp_path)
        cluster.load_script(board_script(7, count=5))
        return cluster.run()
    assert once().states == once().states


def test_runtime_errors_recorded_not_raised(board_program):
    cluster = Cluster(board_program, config=NetConfig(seed=8))
    cluster.load_script([ScriptEntry(10, 0, "Board", "nothing", (), 1)])
    result = cluster.run()
    assert result.errors and result.converged


def test_non_replicated_mutator_diverges(info_program):
    cluster = Cluster(info_program, config=NetConfig(seed=9))
    cluster.load_script([ScriptEntry(10, 0, "Info", "setNumber:", (4,), 1)])
    result = cluster.run()
    assert result.status == "diverged"


def test_early_script_waits_for_boot(board_program):
    cluster = Cluster(board_program, config=NetConfig(seed=10))
    cluster.load_script([ScriptEntry(0, 2, "Board", "add:", (3,), 1),
                         ScriptEntry(0, 7, "Board", "add:", (4,), 2)])
    result = cluster.run()
    assert [e.line for e in result.skipped] == [2]
    assert result.converged and "total=3" in result.states[2]


def test_script_text_round_trips():
    entries = board_script(4, count=10)
    again = parse_script(script_text(entries))
    assert [(e.time, e.replica, e.selector, e.args) for e in again] == \
        [(e.time, e.replica, e.selector, e.args) for e in entries]
