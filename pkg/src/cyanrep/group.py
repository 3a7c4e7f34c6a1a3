"""A Paxos group driven by the simulator: wiring, timers, crash and restart."""

from __future__ import annotations

from typing import Callable, Optional

from .netsim import Simulator
from .paxos import PaxosNode
from .wal import DecisionLog, FileStorage, MemoryStorage, log_path


def memory_storages():
    return lambda replica: MemoryStorage()


def file_storages(directory, fsync: bool = True):
    return lambda replica: FileStorage(log_path(directory, replica), fsync=fsync)


class PaxosGroup:
    def __init__(self, sim: Simulator, n: int, rtt: int,
                 storage_factory: Optional[Callable] = None,
                 on_apply: Optional[Callable] = None):
        self.sim = sim
        self.n = n
        self.rtt = rtt
        self.tick_interval = max(1, rtt // 2)
        self._factory = storage_factory or memory_storages()
        self.storages: dict = {}
        self.nodes: dict = {}
        self.incarnations = {i: 0 for i in range(n)}
        # every (slot, value) each replica delivered, across incarnations
        self.applied: dict = {i: [] for i in range(n)}
        self.on_apply = on_apply
        self.submitted: list = []

    def storage(self, replica: int):
        if replica not in self.storages:
            self.storages[replica] = self._factory(replica)
        return self.storages[replica]

    def is_up(self, replica: int) -> bool:
        return replica in self.nodes

    def start(self, replica: int) -> PaxosNode:
        """Boot (or reboot) ``replica`` from its decision log."""
        if replica in self.nodes:
            raise RuntimeError(f"replica {replica} is already running")
        node = PaxosNode(replica, self.n, self.rtt, DecisionLog(self.storage(replica)), self.sim.now)
        self.incarnations[replica] += 1
        inc = self.incarnations[replica]
        self.nodes[replica] = node
        self.sim.register(replica, lambda src, msg: self._on_message(replica, inc, src, msg))
        self.sim.log("start", replica, None, f"incarnation={node.incarnation}")
        self._schedule_tick(replica, inc)
        self._drain(replica)
        return node

    def crash(self, replica: int) -> None:
        if replica not in self.nodes:
            return
        del self.nodes[replica]
        self.incarnations[replica] += 1
        self.sim.unregister(replica)
        self.sim.log("crash", replica, None, "")

    def submit(self, replica: int, value: bytes) -> None:
        node = self.nodes[replica]
        self.submitted.append(value)
        self._send(replica, node.submit(value, self.sim.now))
        self._drain(replica)

    # -- plumbing --------------------------------------------------------------

    def _send(self, replica, out):
        for dst, msg in out:
            self.sim.send(replica, dst, msg)

    def _on_message(self, replica, inc, src, msg):
        if self.incarnations[replica] != inc:
            return
        node = self.nodes[replica]
        self._send(replica, node.on_message(src, msg, self.sim.now))
        self._drain(replica)

    def _schedule_tick(self, replica, inc):
        self.sim.schedule(self.sim.now + self.tick_interval, "tick",
                          lambda ev: self._tick(replica, inc), src=replica)

    def _tick(self, replica, inc):
        if self.incarnations[replica] != inc:
            return
        node = self.nodes[replica]
        self._send(replica, node.on_tick(self.sim.now))
        self._drain(replica)
        if self.incarnations[replica] == inc:
            self._schedule_tick(replica, inc)

    def _drain(self, replica):
        node = self.nodes.get(replica)
        if node is None:
            return
        inc = self.incarnations[replica]
        for slot, value in node.apply_loop():
            self.applied[replica].append((slot, value))
            if self.on_apply is not None:
                self.on_apply(replica, slot, value)
            if self.incarnations[replica] != inc:
                return

    # -- observations ------------------------------------------------------------

    def settled(self) -> bool:
        """All live replicas agree on a gap-free decided prefix and have nothing in flight."""
        live = list(self.nodes.values())
        if not live:
            return True
        if not all(node.settled() for node in live):
            return False
        frontier = live[0].frontier
        return all(node.frontier == frontier for node in live)

    def decided_sequences(self) -> dict:
        return {i: [node.decided[s] for s in range(node.frontier)] for i, node in self.nodes.items()}
