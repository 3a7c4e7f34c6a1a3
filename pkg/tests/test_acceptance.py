"""End-to-end acceptance checks, one test per criterion."""

from __future__ import annotations

import contextlib
import io
import os
import re
import subprocess
import sys
import time

from cyanrep.cli import main
from cyanrep.cluster import Cluster, ScriptEntry, serial_oracle
from cyanrep.constructors import synthesize_constructors
from cyanrep.group import PaxosGroup
from cyanrep.interpreter import Interpreter, LocalHost, dump_object
from cyanrep.metaobjects import ActionNaming
from cyanrep.netsim import NetConfig, Partition, Simulator
from cyanrep.pipeline import load_units
from cyanrep.printer import pretty_print
from cyanrep.rng import XorShift64Star

from conftest import ACCEPTANCE, FIXTURES, board_script, compile_fixture, script_text


@contextlib.contextmanager
def criterion(number, title):
    ACCEPTANCE[number] = (title, False)
    try:
        yield
    except BaseException:
        print(f"criterion {number}: FAIL - {title}")
        raise
    ACCEPTANCE[number] = (title, True)
    print(f"criterion {number}: PASS - {title}")


def cli(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = main([str(a) for a in argv], out=out, err=err)
    return code, out.getvalue(), err.getvalue()


def squash(text):
    return re.sub(r"\s+", "", text)


def golden_units(name):
    return {p.name: synthesize_constructors(u) for u in load_units([FIXTURES / name]) for p in u.prototypes}


def test_c1_init_golden():
    with criterion(1, "@init expansion matches the Person golden"):
        start = time.perf_counter()
        expanded = compile_fixture("person_init").expanded
        unit = next(u for u in expanded.units if u.prototypes[0].name == "Person")
        golden = golden_units("person_expanded")["Person"]
        assert unit == golden
        assert squash(pretty_print(unit)) == squash(pretty_print(golden))
        assert time.perf_counter() - start < 1.0


def test_c2_replication_golden(tmp_path):
    with criterion(2, "@treplicaAction/@treplicaInit expansion matches the Info goldens"):
        start = time.perf_counter()
        code, _, _ = cli("expand", FIXTURES / "replicated_info", "--out", tmp_path)
        assert code == 0
        got = {p.name: u for u in load_units([tmp_path]) for p in u.prototypes}
        golden = {p.name: u for u in load_units([FIXTURES / "replicated_info_expanded"]) for p in u.prototypes}
        assert sorted(got) == sorted(golden) == ["Info", "InfosetText", "Program"]
        for name in golden:
            assert got[name] == golden[name], name
        info = got["Info"].prototypes[0]
        assert info.method("setTextTreplicaAction:") is not None
        action = got["InfosetText"].prototypes[0]
        assert [f.name for f in action.fields] == ["textVar"]
        cast = action.method("executeOn:").body[0].init
        assert cast.receiver.name == "Info" and cast.selector.text == "cast:"
        sends = [s.expr.selector.text for s in got["Program"].prototypes[0].method("run:").body
                 if hasattr(s, "expr")]
        assert sends[:2] == ["runMachine:numberProcess:rtt:path:", "setTreplica:"]
        assert time.perf_counter() - start < 1.0


def test_c3_nondeterminism_check():
    with criterion(3, "check flags ageInSeconds once and passes the replicated program"):
        start = time.perf_counter()
        code, _, err = cli("check", FIXTURES / "nondeterministic",
                           "--nondet", FIXTURES / "nondeterministic" / "ageInSeconds.registry",
                           "--no-default-registry")
        findings = [l for l in err.splitlines() if ": error: " in l]
        assert code == 1 and len(findings) == 1
        assert findings[0].endswith("Info.ageInSeconds")
        assert cli("check", FIXTURES / "replicated_info")[0] == 0
        assert time.perf_counter() - start < 1.0


def test_c4_convergence(board_program):
    with criterion(4, "20 seeded lossy runs converge to the serial oracle"):
        start = time.perf_counter()
        for seed in range(20):
            script = board_script(seed, count=100)
            cluster = Cluster(board_program, config=NetConfig(seed=seed, drop=0.1, dup=0.05))
            cluster.load_script(script)
            result = cluster.run()
            assert result.status == "converged" and not result.errors and not result.skipped, seed
            assert len(result.states) == 3
            applied = result.applied[0]
            assert len(applied) == len(script)
            assert set(result.states.values()) == {serial_oracle(board_program, applied)}, seed
        assert time.perf_counter() - start < 30.0


def paxos_run(seed):
    """One short randomized run; returns (status, per-replica (slot, value) deliveries, n)."""
    r = XorShift64Star(seed ^ 0x5EED)
    n = 5 if seed % 4 == 0 else 3
    parts = ()
    if seed % 2 == 0:
        begin = r.randint(0, 500)
        cut = frozenset(range(r.randint(1, n // 2)))
        parts = (Partition(begin, begin + r.randint(100, 1500), (cut, frozenset(range(n)) - cut)),)
    config = NetConfig(seed=seed, drop=0.1, dup=0.05, delay=(1, r.randint(1, 150)), partitions=parts)
    sim = Simulator(config, rtt=100)
    group = PaxosGroup(sim, n, 100)
    for i in range(n):
        group.start(i)
    submitted = []
    for j in range(5):
        who, at, value = r.randint(0, n - 1), r.randint(0, 800), bytes([j + 1])
        submitted.append(value)
        sim.schedule(at, "submit", lambda ev, who=who, v=value: group.is_up(who) and group.submit(who, v))
    if seed % 3 == 0:
        victim, at = r.randint(0, n - 1), r.randint(0, 1000)
        sim.schedule(at, "crash", lambda ev: group.crash(victim))
        sim.schedule(at + r.randint(1, 1000), "restart", lambda ev: group.start(victim))
    status = sim.run(stop=lambda: sim.now > 2500 and group.settled(), max_time=60_000)
    return status, group.applied, n


def test_c5_paxos_safety():
    with criterion(5, "no agreement violation or delivery gap in 1000 faulty Paxos runs"):
        start = time.perf_counter()
        for seed in range(1000):
            status, applied, n = paxos_run(seed)
            chosen = {}
            for replica in range(n):
                expected_slot = 0
                for slot, value in applied[replica]:
                    assert chosen.setdefault(slot, value) == value, (seed, "agreement", slot)
                    # a restart replays from slot 0; within an incarnation slots are consecutive
                    assert slot in (expected_slot, 0), (seed, "gap", replica, slot)
                    expected_slot = slot + 1
            assert status == "stopped", (seed, "liveness")
        assert time.perf_counter() - start < 120.0


def test_c6_crash_recovery(board_program, tmp_path):
    with criterion(6, "a replica killed after k decisions recovers to its peers' state"):
        start = time.perf_counter()
        for k in range(11):
            cluster = Cluster(board_program, config=NetConfig(seed=100 + k, drop=0.05, dup=0.05),
                              log_dir=tmp_path / f"k{k}")
            cluster.load_script(board_script(k, count=40))
            cluster.crash_after(1, k, 3000)
            result = cluster.run()
            assert result.status == "converged" and set(result.states) == {0, 1, 2}, k
            node = cluster.group.nodes[1]
            # the incarnation counter is read back from the log, so 2 means a real restart
            assert node.incarnation == 2, k
            assert node.recovered_decisions >= k
            assert set(result.states.values()) == {serial_oracle(board_program, result.applied[0])}
        assert time.perf_counter() - start < 30.0


SAMPLES = {"String": ["", "x", "a;b", "é\n"], "Int": [0, 1, -7, 2**63 - 1], "Long": [0, -(2**63)]}


def sample_calls(method):
    types = [p.type_name for p in method.params]
    return [[SAMPLES[t][(i + j) % len(SAMPLES[t])] for j, t in enumerate(types)] for i in range(4)]


def test_c7_wrapper_equivalence():
    with criterion(7, "wrapper execution equals the renamed method on one replica"):
        start = time.perf_counter()
        checked = 0
        for fixture in ("replicated_board", "replicated_info"):
            comp = compile_fixture(fixture)
            for b in comp.bindings:
                if b.definition.name != "treplicaAction":
                    continue
                owner, sel = b.site.proto.name, b.site.decl.selector.text
                calls = sample_calls(b.site.decl)
                cluster = Cluster(comp.expanded, replicas=1)
                cluster.load_script([ScriptEntry(100 * (i + 1), 0, owner, sel, tuple(a), i)
                                     for i, a in enumerate(calls)])
                wrapped = cluster.run()
                assert wrapped.status == "converged" and not wrapped.errors
                host = _Capture()
                interp = Interpreter(comp.expanded, host)
                interp.run_main(["Program", "0"])
                ctx = host.handles[0].context
                for a in calls:
                    interp.send(ctx, ActionNaming(owner, sel).renamed_selector, list(a))
                assert wrapped.states[0] == dump_object(comp.expanded, ctx), (owner, sel)
                checked += 1
        assert checked == 5
        assert time.perf_counter() - start < 5.0


class _Capture(LocalHost):
    def __init__(self):
        super().__init__()
        self.handles = []

    def run_machine(self, interp, handle):
        self.handles.append(handle)


def run_cli_process(args, cwd, hashseed):
    env = dict(os.environ, PYTHONHASHSEED=str(hashseed))
    proc = subprocess.run([sys.executable, "-m", "cyanrep", *map(str, args)], cwd=cwd, env=env,
                          capture_output=True, timeout=120)
    return proc.returncode, proc.stdout, proc.stderr


def test_c8_toolchain_determinism(tmp_path):
    with criterion(8, "repeated command runs are byte-identical"):
        script = tmp_path / "board.script"
        script.write_text(script_text(board_script(8, count=30)))
        commands = [
            ["check", FIXTURES / "nondeterministic"],
            ["run", FIXTURES / "person_init"],
            ["simulate", FIXTURES / "replicated_board", "--script", script, "--seed", 8,
             "--drop", 0.2, "--dup", 0.1, "--trace", "--partition", "500..2500:0|1,2"],
            ["simulate", FIXTURES / "replicated_info", "--seed", 1, "--trace", "--log-dir", "logs"],
        ]
        for args in commands:
            runs = [run_cli_process(args, tmp_path, seed) for seed in (1, 2)]
            assert runs[0] == runs[1], args
            assert runs[0][1] or runs[0][2]
        trees = []
        for seed in (1, 2):
            out = tmp_path / f"expanded{seed}"
            code, stdout, _ = run_cli_process(["expand", FIXTURES / "replicated_board", "--out", out],
                                              tmp_path, seed)
            assert code == 0
            trees.append(({p.name: p.read_bytes() for p in sorted(out.iterdir())},
                          stdout.replace(str(out).encode(), b"OUT")))
        assert trees[0] == trees[1]
