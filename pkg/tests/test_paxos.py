from __future__ import annotations

import pytest

from cyanrep.group import PaxosGroup
from cyanrep.netsim import NetConfig, Simulator
from cyanrep.paxos import (NOOP, Accept, Accepted, Decide, Nack, PaxosNode, Prepare, Promise)
from cyanrep.wal import ACCEPT, DecisionLog, MemoryStorage


def node(i=0, n=3, storage=None):
    return PaxosNode(i, n, 100, DecisionLog(storage or MemoryStorage()))


def sent(out, kind):
    return [(dst, m) for dst, m in out if isinstance(m, kind)]


def test_promise_reports_accepted_values():
    acc = node(1)
    acc.on_message(0, Accept((1, 0), 0, b"v"), 0)
    [(dst, promise)] = acc.on_message(2, Prepare((2, 2), 0), 1)
    assert dst == 2 and isinstance(promise, Promise)
    assert promise.accepted == ((0, (1, 0), b"v"),)


def test_stale_ballots_are_refused():
    acc = node(1)
    acc.on_message(2, Prepare((5, 2), 0), 0)
    [(_, reply)] = acc.on_message(0, Accept((3, 0), 0, b"v"), 1)
    assert isinstance(reply, Nack) and reply.promised == (5, 2)
    [(_, reply)] = acc.on_message(0, Prepare((4, 0), 0), 2)
    assert isinstance(reply, Nack)


def test_accept_is_logged_before_the_reply():
    storage = MemoryStorage()
    acc = node(1, storage=storage)
    out = acc.on_message(0, Accept((1, 0), 3, b"v"), 0)
    assert sent(out, Accepted)
    assert any(r.kind == ACCEPT for r in DecisionLog(storage).records())


def test_new_leader_reproposes_highest_accepted_value():
    lead = node(0)
    out = lead.submit(b"mine", 0)
    ballot = sent(out, Prepare)[0][1].ballot
    lead.on_message(1, Promise(ballot, ((0, (0, 1), b"old"), (1, (0, 2), NOOP)), ()), 1)
    assert lead.is_leader
    accepts = {m.slot: m.value for _, m in lead.on_tick(2) if isinstance(m, Accept)}
    assert accepts[0] == b"old"
    assert b"mine" in accepts.values()


def test_apply_loop_buffers_until_gap_fills():
    n = node(1)
    n.on_message(0, Decide(1, b"b"), 0)
    assert list(n.apply_loop()) == []
    n.on_message(0, Decide(0, NOOP), 1)
    assert list(n.apply_loop()) == [(0, None), (1, b"b")]


def test_restart_recovers_state_and_bumps_incarnation():
    storage = MemoryStorage()
    first = node(1, storage=storage)
    first.on_message(0, Accept((2, 0), 0, b"v"), 0)
    first.on_message(0, Decide(0, b"v"), 1)
    again = node(1, storage=storage)
    assert again.incarnation == first.incarnation + 1
    assert again.decided == {0: b"v"} and again.recovered_decisions == 1
    assert again.promised >= (2, 0)


def test_empty_value_is_reserved():
    with pytest.raises(ValueError):
        node().submit(NOOP, 0)


def test_fault_free_group_agrees_on_everything():
    sim = Simulator(NetConfig(seed=4), rtt=100)
    group = PaxosGroup(sim, 3, 100)
    for i in range(3):
        group.start(i)
    values = [bytes([i % 3, i]) for i in range(12)]
    for i, v in enumerate(values):
        sim.schedule(10 * i, "submit", lambda ev, v=v, i=i: group.submit(i % 3, v))
    assert sim.run(stop=lambda: sim.now > 200 and group.settled(), max_time=20_000) == "stopped"
    seqs = group.decided_sequences()
    assert seqs[0] == seqs[1] == seqs[2]
    assert sorted(v for v in seqs[0] if v) == sorted(values)
