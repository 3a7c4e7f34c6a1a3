"""N interpreter replicas in one process, ordered by a simulated Paxos group.

Each replica boots by running ``Program run:`` with ``["Program", "<id>"]``.
The first ``runMachine:`` fixes the group size (unless overridden) and the
rtt. A blocking ``execute:`` pumps the shared simulator until the action has
been applied locally; calls into a replica that is already blocked wait in
that replica's backlog.
"""

from __future__ import annotations

import json
import re
from pathlib import Path, PurePosixPath
from dataclasses import dataclass, field
from typing import Callable, Optional

from .errors import CyanRuntimeError
from .group import PaxosGroup, memory_storages
from .interpreter import Host, Interpreter, MachineHandle, RecordingHost, dump_value
from .netsim import LivenessTimeout, NetConfig, Simulator
from .resolver import Program
from .serialization import decode_envelope, encode_envelope
from .wal import FileStorage, log_path

DEFAULT_MAX_TIME = 600_000
DEFAULT_RTT = 200


class ReplicaCrashed(Exception):
    """Unwinds the frames of a replica incarnation that has been killed."""


class ScriptError(ValueError):
    pass


@dataclass(frozen=True)
class ScriptEntry:
    time: int
    replica: int
    prototype: str
    selector: str
    args: tuple
    line: int = 0

    def summary(self) -> str:
        shown = " ".join(json.dumps(a) if isinstance(a, str) else str(a) for a in self.args)
        return f"{self.prototype} {self.selector} {shown}".rstrip()


_TOKEN = re.compile(r'\s*("(?:[^"\\]|\\.)*",?|\S+)')


def _split(line: str) -> list[str]:
    out, at = [], 0
    line = line.rstrip()
    while at < len(line):
        m = _TOKEN.match(line, at)
        if m is None:
            break
        out.append(m.group(1))
        at = m.end()
    return out


def parse_script(text: str, origin: str = "<script>") -> list[ScriptEntry]:
    """``<time-ms> <replica-id> <prototype> <selector> <arg>...`` per line; ``#`` starts a comment line."""
    entries = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip() or raw.lstrip().startswith("#"):
            continue
        tokens = _split(raw)
        if len(tokens) < 4:
            raise ScriptError(f"{origin}:{lineno}: expected TIME REPLICA PROTOTYPE SELECTOR ARGS...")
        try:
            time, replica = int(tokens[0]), int(tokens[1])
        except ValueError:
            raise ScriptError(f"{origin}:{lineno}: time and replica id must be integers") from None
        if time < 0 or replica < 0:
            raise ScriptError(f"{origin}:{lineno}: time and replica id must be non-negative")
        args = []
        for tok in tokens[4:]:
            tok = tok.rstrip(",")
            if tok.startswith('"'):
                try:
                    args.append(json.loads(tok))
                except json.JSONDecodeError:
                    raise ScriptError(f"{origin}:{lineno}: bad string literal {tok}") from None
            else:
                try:
                    args.append(int(tok))
                except ValueError:
                    raise ScriptError(f"{origin}:{lineno}: argument {tok!r} is neither an "
                                      f"integer nor a quoted string") from None
        entries.append(ScriptEntry(time, replica, tokens[2], tokens[3], tuple(args), lineno))
    return entries


@dataclass
class Replica:
    id: int
    incarnation: int
    interp: Optional[Interpreter] = None
    alive: bool = True
    busy: bool = False
    backlog: list = field(default_factory=list)
    handle: Optional[MachineHandle] = None
    seq: int = 0
    applied_keys: set = field(default_factory=set)
    applied_actions: list = field(default_factory=list)
    errors: list = field(default_factory=list)

    @property
    def context(self):
        return self.handle.context if self.handle is not None else None


class _ClusterHost(Host):
    def __init__(self, cluster: "Cluster", replica: int, incarnation: int):
        self.cluster = cluster
        self.replica = replica
        self.incarnation = incarnation

    def now(self) -> int:
        return self.cluster.sim.now

    def run_machine(self, interp, handle):
        self.cluster._run_machine(self.replica, self.incarnation, handle)

    def execute(self, interp, handle, action):
        self.cluster._execute(self.replica, self.incarnation, interp, action)


@dataclass
class SimulationResult:
    status: str  # "converged" | "diverged" | "timeout"
    states: dict  # replica -> canonical dump of its context
    outputs: dict  # replica -> println lines, all incarnations
    applied: dict  # replica -> serialized actions applied, in order
    errors: list
    trace: Optional[list]
    end_time: int
    skipped: list

    @property
    def converged(self) -> bool:
        return self.status == "converged"


class Cluster:
    def __init__(self, program: Program, replicas: Optional[int] = None,
                 config: Optional[NetConfig] = None, log_dir=None, trace: bool = False,
                 max_time: int = DEFAULT_MAX_TIME, argv_for: Optional[Callable] = None,
                 trace_writes: bool = False):
        if replicas is not None and replicas < 1:
            raise ValueError("a cluster needs at least one replica")
        self.program = program
        self.n = replicas
        self._override = replicas is not None
        self.sim = Simulator(config or NetConfig(), rtt=DEFAULT_RTT, trace=trace)
        self.log_dir = log_dir
        self.storage_factory = self._file_storage if log_dir is not None else memory_storages()
        self.max_time = max_time
        self.argv_for = argv_for or (lambda r: ["Program", str(r)])
        self.trace_writes = trace_writes
        self.group: Optional[PaxosGroup] = None
        self.replicas: dict = {}
        self.incarnations: dict = {}
        self.outputs: dict = {}
        self.errors: list = []
        self.skipped: list = []
        self.interpreters: list = []  # every interpreter ever booted, for write traces
        self._outstanding = 0
        self._booted = False
        self._crash_after: dict = {}
        self._fresh: set = set()
        self._boot_planned: set = set()
        # script entries for replicas that have not booted yet
        self._waiting: dict = {}

    # -- public driving API --------------------------------------------------

    def boot(self):
        if self._booted:
            return
        self._booted = True
        for r in range(self.n if self.n is not None else 1):
            self._plan_boot(r)

    def _plan_boot(self, replica: int):
        if replica in self._boot_planned:
            return
        self._boot_planned.add(replica)
        self._schedule(self.sim.now, "boot", replica, None, lambda ev: self._boot(replica))

    def load_script(self, entries):
        for e in entries:
            self._schedule(e.time, "script", e.replica, e, lambda ev, e=e: self._script(e))

    def schedule_crash(self, replica: int, at: int, restart_at: Optional[int] = None):
        self._schedule(at, "crash", replica, None, lambda ev: self.crash(replica))
        if restart_at is not None:
            self._schedule(restart_at, "restart", replica, None, lambda ev: self._boot(replica))

    def crash_after(self, replica: int, k: int, downtime: int):
        """Kill ``replica`` once it has applied ``k`` actions; reboot it ``downtime`` ms later."""
        self._crash_after[replica] = (k, downtime)
        self._outstanding += 1  # released when the crash has been scheduled

    def crash(self, replica: int):
        rep = self.replicas.get(replica)
        if rep is not None:
            rep.alive = False
        self.incarnations[replica] = self.incarnations.get(replica, 0) + 1
        if self.group is not None:
            self.group.crash(replica)
        self.sim.log("kill", replica, None, "")

    def run(self) -> SimulationResult:
        self.boot()
        status = "converged"
        try:
            reason = self.sim.run(stop=self._done, max_time=self.max_time)
            if reason != "stopped" and not self._done():
                status = "timeout"
        except LivenessTimeout:
            status = "timeout"
        for entries in self._waiting.values():
            self.skipped.extend(entries)
        self._waiting.clear()
        states = self.states()
        if status == "converged" and len(set(states.values())) > 1:
            status = "diverged"
        return SimulationResult(
            status, states, {r: list(v) for r, v in sorted(self.outputs.items())},
            {r: list(rep.applied_actions) for r, rep in sorted(self.replicas.items())},
            list(self.errors), self.sim.trace, self.sim.now, list(self.skipped))

    def states(self) -> dict:
        out = {}
        for r, rep in sorted(self.replicas.items()):
            if rep.alive:
                out[r] = dump_value(self.program, rep.context) if rep.context is not None else "none"
        return out

    def log_file(self, replica: int) -> Path:
        """``<path>/replica-<id>.log`` with the program's path re-rooted under ``log_dir``."""
        rep = self.replicas[replica]
        relative = PurePosixPath(rep.handle.path).relative_to(PurePosixPath(rep.handle.path).anchor)
        return log_path(Path(self.log_dir, *relative.parts), replica)

    def _file_storage(self, replica: int):
        path = self.log_file(replica)
        if path.exists() and replica not in self._fresh:
            path.unlink()  # each simulation starts from empty logs
        self._fresh.add(replica)
        return FileStorage(path)

    # -- events --------------------------------------------------------------

    def _schedule(self, at, kind, replica, payload, fn):
        self._outstanding += 1

        def run(ev):
            self._outstanding -= 1
            fn(ev)
        self.sim.schedule(at, kind, run, src=replica, payload=payload)

    def _done(self) -> bool:
        if self._outstanding:
            return False
        if any(rep.busy or rep.backlog for rep in self.replicas.values() if rep.alive):
            return False
        return self.group is None or self.group.settled()

    def _alive(self, replica, inc) -> bool:
        return self.incarnations.get(replica) == inc

    def _boot(self, replica: int):
        inc = self.incarnations.get(replica, 0) + 1
        self.incarnations[replica] = inc
        rep = Replica(replica, inc)
        self.replicas[replica] = rep
        lines = self.outputs.setdefault(replica, [])

        def out(line, replica=replica):
            lines.append(line)
            self.sim.log("out", replica, None, json.dumps(line))

        rep.interp = Interpreter(self.program, _ClusterHost(self, replica, inc), replica_id=replica,
                                 out=out, trace_writes=self.trace_writes)
        self.interpreters.append(rep.interp)
        self._call(rep, lambda: rep.interp.run_main(self.argv_for(replica)), "boot")
        waiting = self._waiting.pop(replica, [])
        if not waiting:
            return
        if rep.alive and rep.context is not None:
            rep.backlog[:0] = waiting
            if not rep.busy:
                self._drain_backlog(rep)
        else:
            self.skipped.extend(waiting)

    def _script(self, entry: ScriptEntry):
        rep = self.replicas.get(entry.replica)
        if rep is None and (self.n is None or entry.replica < self.n):
            self._waiting.setdefault(entry.replica, []).append(entry)
            return
        if rep is None or not rep.alive or rep.context is None:
            self.skipped.append(entry)
            self.sim.log("skip", entry.replica, None, entry.summary())
            return
        if rep.busy:
            rep.backlog.append(entry)
            return
        self._invoke(rep, entry)

    def _invoke(self, rep: Replica, entry: ScriptEntry):
        def call():
            ctx = rep.context
            if not self.program.is_subprototype(ctx.proto, entry.prototype):
                raise CyanRuntimeError(f"script line {entry.line}: replica {rep.id}'s context is "
                                       f"{ctx.proto}, not {entry.prototype}")
            rep.interp.send(ctx, entry.selector, list(entry.args))
        self._call(rep, call, f"script line {entry.line}")

    def _call(self, rep: Replica, fn, what: str):
        rep.busy = True
        try:
            fn()
        except ReplicaCrashed:
            return
        except CyanRuntimeError as exc:
            msg = f"replica {rep.id}: {what}: {exc}"
            rep.errors.append(msg)
            self.errors.append(msg)
            self.sim.log("error", rep.id, None, str(exc))
        finally:
            rep.busy = False
        self._drain_backlog(rep)

    def _drain_backlog(self, rep: Replica):
        if rep.alive and rep.backlog:
            nxt = rep.backlog.pop(0)
            self._schedule(self.sim.now, "script", rep.id, nxt, lambda ev: self._resume(rep, nxt))

    def _resume(self, rep: Replica, entry: ScriptEntry):
        if not rep.alive:
            self.skipped.append(entry)
            return
        if rep.busy:
            rep.backlog.insert(0, entry)
            return
        self._invoke(rep, entry)

    # -- host callbacks ------------------------------------------------------------

    def _run_machine(self, replica: int, inc: int, handle: MachineHandle):
        rep = self.replicas[replica]
        if rep.handle is not None:
            raise CyanRuntimeError(f"replica {replica} called runMachine: twice")
        if self.group is None:
            if not self._override:
                self.n = handle.process_count
            self.sim.rtt = handle.rtt
            self.group = PaxosGroup(self.sim, self.n, handle.rtt, self.storage_factory, self._on_apply)
            for r in range(self.n):
                self._plan_boot(r)
            for r in [r for r in self._waiting if r >= self.n]:
                self.skipped.extend(self._waiting.pop(r))
        elif not self._override and handle.process_count != self.n:
            raise CyanRuntimeError(f"replica {replica} asks for {handle.process_count} processes, "
                                   f"the group has {self.n}")
        if replica >= self.n:
            raise CyanRuntimeError(f"replica id {replica} outside a group of {self.n}")
        rep.handle = handle
        self.group.start(replica)
        self._maybe_crash(rep)

    def _execute(self, replica: int, inc: int, interp: Interpreter, action):
        rep = self.replicas[replica]
        data = interp.serialize_action(action)
        node = self.group.nodes[replica]
        rep.seq += 1
        seq = (node.incarnation << 32) | rep.seq
        key = (replica, seq)
        self.group.submit(replica, encode_envelope(replica, seq, data))
        while key not in rep.applied_keys:
            if not self._alive(replica, inc):
                raise ReplicaCrashed(replica)
            if self.sim.now > self.max_time:
                raise LivenessTimeout(f"replica {replica} still waiting at {self.sim.now} ms")
            if not self.sim.step():
                raise LivenessTimeout(f"replica {replica} waits forever: no events left")
        if not self._alive(replica, inc):
            raise ReplicaCrashed(replica)

    def _on_apply(self, replica: int, slot: int, value):
        rep = self.replicas[replica]
        if value is None:
            return
        env = decode_envelope(value)
        if env.key in rep.applied_keys:
            return
        rep.applied_keys.add(env.key)
        rep.applied_actions.append(env.action)
        try:
            rep.interp.apply_action(rep.context, env.action)
        except CyanRuntimeError as exc:
            msg = f"replica {replica}: applying slot {slot}: {exc}"
            rep.errors.append(msg)
            self.errors.append(msg)
        self._maybe_crash(rep)

    def _maybe_crash(self, rep: Replica):
        plan = self._crash_after.get(rep.id)
        if plan is None or len(rep.applied_actions) < plan[0]:
            return
        del self._crash_after[rep.id]
        k, downtime = plan
        self._outstanding -= 1
        now = self.sim.now
        self.schedule_crash(rep.id, now, now + downtime)


def serial_oracle(program: Program, actions, argv=("Program", "0")) -> str:
    """State a lone replica reaches by applying ``actions`` in order, without consensus."""
    host = RecordingHost()
    interp = Interpreter(program, host)
    interp.run_main(list(argv))
    if not host.handles:
        raise CyanRuntimeError("the program never called runMachine:")
    context = host.handles[0].context
    for data in actions:
        interp.apply_action(context, data)
    return dump_value(program, context)
