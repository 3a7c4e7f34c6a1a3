"""Multi-Paxos replica: proposer, acceptor and learner in one state machine.

Every entry point (:meth:`PaxosNode.submit`, :meth:`PaxosNode.on_message`,
:meth:`PaxosNode.on_tick`) consumes one event and returns the messages to
send as ``(destination, message)`` pairs. Acceptor state is written to the
decision log before the call returns, so nothing is ever sent about state
that is not yet durable.

Values are opaque bytes; ``b""`` is the no-op used to fill abandoned slots.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterator, Optional

from .wal import (
    ACCEPT, DECIDE, INCARNATION, PROMISE, DecisionLog, accept_payload, decide_payload,
    incarnation_payload, promise_payload,
)

log = logging.getLogger(__name__)

NOOP = b""
ZERO_BALLOT = (0, -1)  # below every ballot a proposer can pick
CATCHUP_BATCH = 64
RETRANSMIT_BATCH = 64


class SafetyViolation(AssertionError):
    """Two different values were learned for one slot."""


def _short(value: bytes) -> str:
    return "noop" if value == NOOP else f"{len(value)}B:{value[-6:].hex()}"


@dataclass(frozen=True)
class Prepare:
    ballot: tuple
    low: int

    def summary(self):
        return f"Prepare b={self.ballot[0]}.{self.ballot[1]} low={self.low}"


@dataclass(frozen=True)
class Promise:
    ballot: tuple
    accepted: tuple  # ((slot, ballot, value), ...)
    decided: tuple  # ((slot, value), ...)

    def summary(self):
        return (f"Promise b={self.ballot[0]}.{self.ballot[1]} "
                f"accepted={len(self.accepted)} decided={len(self.decided)}")


@dataclass(frozen=True)
class Nack:
    ballot: tuple
    promised: tuple

    def summary(self):
        return f"Nack b={self.ballot[0]}.{self.ballot[1]} promised={self.promised[0]}.{self.promised[1]}"


@dataclass(frozen=True)
class Accept:
    ballot: tuple
    slot: int
    value: bytes

    def summary(self):
        return f"Accept b={self.ballot[0]}.{self.ballot[1]} slot={self.slot} {_short(self.value)}"


@dataclass(frozen=True)
class Accepted:
    ballot: tuple
    slot: int

    def summary(self):
        return f"Accepted b={self.ballot[0]}.{self.ballot[1]} slot={self.slot}"


@dataclass(frozen=True)
class Decide:
    slot: int
    value: bytes

    def summary(self):
        return f"Decide slot={self.slot} {_short(self.value)}"


@dataclass(frozen=True)
class Forward:
    values: tuple

    def summary(self):
        return f"Forward n={len(self.values)}"


@dataclass(frozen=True)
class Heartbeat:
    ballot: tuple
    frontier: int

    def summary(self):
        return f"Heartbeat b={self.ballot[0]}.{self.ballot[1]} frontier={self.frontier}"


@dataclass(frozen=True)
class CatchupReq:
    low: int

    def summary(self):
        return f"CatchupReq low={self.low}"


class PaxosNode:
    def __init__(self, node_id: int, n: int, rtt: int, decision_log: DecisionLog, now: int = 0):
        if not 0 <= node_id < n:
            raise ValueError(f"node id {node_id} outside 0..{n - 1}")
        self.id = node_id
        self.n = n
        self.majority = n // 2 + 1
        self.rtt = max(rtt, 2)
        self.log = decision_log
        # lower ids time out first so they tend to win elections
        self.election_timeout = 4 * self.rtt + node_id * self.rtt
        self.forward_timeout = 4 * self.rtt

        state = decision_log.recover()
        self.incarnation = state.incarnation + 1
        decision_log.append(INCARNATION, incarnation_payload(self.incarnation))
        self.accepted: dict = dict(state.accepted)
        self.decided: dict = dict(state.decided)
        self.recovered_decisions = len(self.decided)
        promised = state.promised or ZERO_BALLOT
        for b, _ in self.accepted.values():
            promised = max(promised, b)
        self.promised = promised
        self.max_round = promised[0]
        self.decided_values = set(self.decided.values())
        self.frontier = 0
        self._advance_frontier()
        self.next_apply = 0

        # proposer
        self.phase = "idle"  # idle | preparing | leading
        self.ballot: Optional[tuple] = None
        self.promises: dict = {}
        self.proposals: dict = {}  # slot -> value in flight under self.ballot
        self.accepts: dict = {}  # slot -> set of acceptor ids
        self.inflight: set = set()
        self.queue: list = []  # values waiting for this node to lead
        self.next_slot = 0
        self.prepare_started = 0
        self.low = 0

        # client side
        self.pending: list = []
        self.leader_hint = 0
        self.last_contact = now
        self.last_forward = now
        self.last_catchup = -self.rtt
        self.known_frontier = self.frontier

    # -- helpers ---------------------------------------------------------------

    def _advance_frontier(self):
        while self.frontier in self.decided:
            self.frontier += 1

    def _persist(self, kind, payload):
        self.log.append(kind, payload)

    def _promise_up_to(self, ballot):
        if ballot > self.promised:
            self.promised = ballot
            self._persist(PROMISE, promise_payload(ballot))

    def _see(self, ballot):
        self.max_round = max(self.max_round, ballot[0])

    def _others(self):
        return [p for p in range(self.n) if p != self.id]

    def _broadcast(self, msg, include_self=True) -> list:
        return [(p, msg) for p in range(self.n) if include_self or p != self.id]

    def _step_down(self, ballot, now):
        if self.phase != "idle" and (self.ballot is None or ballot > self.ballot):
            log.debug("node %d steps down for ballot %s", self.id, ballot)
            self.phase = "idle"
            self.proposals.clear()
            self.accepts.clear()
            self.inflight.clear()
        self.leader_hint = ballot[1]
        self.last_contact = now

    @property
    def is_leader(self) -> bool:
        return self.phase == "leading"

    def has_work(self) -> bool:
        if self.pending or self.queue:
            return True
        if any(s not in self.decided for s in self.accepted):
            return True
        return self.known_frontier > self.frontier or len(self.decided) > self.frontier

    def settled(self) -> bool:
        """Nothing in flight from this node's point of view.

        Accepted-but-undecided slots do not count: a value accepted only by a
        minority under a superseded ballot was never chosen, and the next
        leader overwrites it.
        """
        return (not self.pending and not self.queue and not self.proposals
                and self.next_apply == self.frontier == len(self.decided))

    # -- learning and delivery ----------------------------------------------

    def _learn(self, slot: int, value: bytes, now: int) -> list:
        out = []
        if slot in self.decided:
            if self.decided[slot] != value:
                raise SafetyViolation(f"node {self.id}: slot {slot} decided twice "
                                      f"({_short(self.decided[slot])} vs {_short(value)})")
            return out
        self._persist(DECIDE, decide_payload(slot, value))
        self.decided[slot] = value
        self.decided_values.add(value)
        self._advance_frontier()
        self.known_frontier = max(self.known_frontier, self.frontier)
        if value in self.pending:
            self.pending.remove(value)
        if value in self.queue:
            self.queue.remove(value)
        mine = self.proposals.pop(slot, None)
        self.accepts.pop(slot, None)
        if mine is not None and mine != value:
            # our proposal lost this slot to an earlier ballot's value; try again elsewhere
            self.inflight.discard(mine)
            if mine != NOOP and mine not in self.decided_values and self.is_leader:
                out += self._propose([mine], now)
        return out

    def apply_loop(self) -> Iterator[tuple]:
        """Yield ``(slot, value)`` in slot order, ``value`` None for no-ops; stops at a gap."""
        while self.next_apply in self.decided:
            slot = self.next_apply
            value = self.decided[slot]
            self.next_apply += 1
            yield slot, (None if value == NOOP else value)

    # -- proposer ------------------------------------------------------------

    def _start_prepare(self, now: int) -> list:
        self.max_round += 1
        self.ballot = (self.max_round, self.id)
        self.phase = "preparing"
        self.promises = {}
        self.proposals = {}
        self.accepts = {}
        self.inflight = set()
        self.prepare_started = now
        self.low = self.frontier
        log.debug("node %d prepares ballot %s from slot %d", self.id, self.ballot, self.low)
        return self._broadcast(Prepare(self.ballot, self.low))

    def _become_leader(self, now: int) -> list:
        self.phase = "leading"
        self.leader_hint = self.id
        self.last_contact = now
        out = []
        best: dict = {}
        top = max(self.low - 1, self.frontier - 1, max(self.decided, default=-1))
        for promise in self.promises.values():
            for slot, value in promise.decided:
                out += self._learn(slot, value, now)
                top = max(top, slot)
            for slot, ballot, value in promise.accepted:
                top = max(top, slot)
                if slot not in best or ballot > best[slot][0]:
                    best[slot] = (ballot, value)
        self.next_slot = top + 1
        for slot in range(self.low, top + 1):
            if slot in self.decided:
                continue
            value = best[slot][1] if slot in best else NOOP
            out += self._issue(slot, value)
        waiting = self.queue + [v for v in self.pending if v not in self.queue]
        self.queue = []
        out += self._propose(waiting, now)
        out += self._broadcast(Heartbeat(self.ballot, self.frontier), include_self=False)
        return out

    def _issue(self, slot: int, value: bytes) -> list:
        self.proposals[slot] = value
        self.accepts[slot] = set()
        if value != NOOP:
            self.inflight.add(value)
        return self._broadcast(Accept(self.ballot, slot, value))

    def _propose(self, values, now: int) -> list:
        out = []
        for v in values:
            if v in self.decided_values or v in self.inflight:
                continue
            while self.next_slot in self.decided or self.next_slot in self.proposals:
                self.next_slot += 1
            slot = self.next_slot
            self.next_slot += 1
            out += self._issue(slot, v)
        return out

    def _route(self, values, now: int) -> list:
        if self.phase == "leading":
            return self._propose(values, now)
        if self.phase == "preparing":
            self.queue.extend(v for v in values if v not in self.queue)
            return []
        if self.leader_hint == self.id:
            self.queue.extend(v for v in values if v not in self.queue)
            return self._start_prepare(now)
        self.last_forward = now
        return [(self.leader_hint, Forward(tuple(values)))]

    # -- entry points --------------------------------------------------------

    def submit(self, value: bytes, now: int) -> list:
        if value == NOOP:
            raise ValueError("the empty value is reserved for no-ops")
        if value not in self.pending:
            self.pending.append(value)
        return self._flush(self._route([value], now), now)

    def on_message(self, src: int, msg, now: int) -> list:
        return self._flush(self._handle(src, msg, now), now)

    def on_tick(self, now: int) -> list:
        out = []
        if self.phase == "leading":
            out += self._broadcast(Heartbeat(self.ballot, self.frontier), include_self=False)
            for slot in sorted(self.proposals)[:RETRANSMIT_BATCH]:
                msg = Accept(self.ballot, slot, self.proposals[slot])
                out += [(p, msg) for p in self._others() if p not in self.accepts.get(slot, ())]
        elif self.phase == "preparing":
            if now - self.prepare_started >= self.election_timeout:
                out += self._start_prepare(now)
            else:
                msg = Prepare(self.ballot, self.low)
                out += [(p, msg) for p in self._others() if p not in self.promises]
        elif self.has_work() and now - self.last_contact >= self.election_timeout:
            out += self._start_prepare(now)
        elif (self.pending or self.queue) and now - self.last_forward >= self.forward_timeout:
            self.last_forward = now
            if self.leader_hint == self.id:
                out += self._start_prepare(now)
            else:
                # values relayed to us while we were a candidate go to the new leader
                values = self.queue + [v for v in self.pending if v not in self.queue]
                self.queue = []
                out.append((self.leader_hint, Forward(tuple(values))))
        behind = self.known_frontier > self.frontier or len(self.decided) > self.frontier
        if behind and self.leader_hint != self.id and now - self.last_catchup >= self.rtt:
            self.last_catchup = now
            out.append((self.leader_hint, CatchupReq(self.frontier)))
        elif (self.phase == "idle" and now - self.last_contact >= self.election_timeout
              and now - self.last_catchup >= self.election_timeout):
            # no leader to learn from: a restarted or cut-off node asks everyone
            self.last_catchup = now
            out += self._broadcast(CatchupReq(self.frontier), include_self=False)
        return self._flush(out, now)

    def _flush(self, out: list, now: int) -> list:
        """Handle self-addressed messages locally; return the rest."""
        external = []
        work = list(out)
        i = 0
        while i < len(work):
            dst, msg = work[i]
            i += 1
            if dst == self.id:
                work.extend(self._handle(self.id, msg, now))
            else:
                external.append((dst, msg))
        return external

    def _handle(self, src: int, msg, now: int) -> list:
        if isinstance(msg, Prepare):
            return self._on_prepare(src, msg, now)
        if isinstance(msg, Promise):
            return self._on_promise(src, msg, now)
        if isinstance(msg, Nack):
            return self._on_nack(src, msg, now)
        if isinstance(msg, Accept):
            return self._on_accept(src, msg, now)
        if isinstance(msg, Accepted):
            return self._on_accepted(src, msg, now)
        if isinstance(msg, Decide):
            return self._learn(msg.slot, msg.value, now)
        if isinstance(msg, Forward):
            return self._on_forward(src, msg, now)
        if isinstance(msg, Heartbeat):
            return self._on_heartbeat(src, msg, now)
        if isinstance(msg, CatchupReq):
            return self._on_catchup(src, msg, now)
        raise TypeError(f"unknown message {msg!r}")

    # -- acceptor ------------------------------------------------------------

    def _on_prepare(self, src, msg: Prepare, now) -> list:
        self._see(msg.ballot)
        if msg.ballot < self.promised:
            log.debug("node %d ignores stale prepare %s", self.id, msg.ballot)
            return [(src, Nack(msg.ballot, self.promised))]
        self._promise_up_to(msg.ballot)
        if src != self.id:
            self._step_down(msg.ballot, now)
        accepted = tuple((s, b, v) for s, (b, v) in sorted(self.accepted.items())
                         if s >= msg.low and s not in self.decided)
        decided = tuple((s, v) for s, v in sorted(self.decided.items()) if s >= msg.low)
        return [(src, Promise(msg.ballot, accepted, decided))]

    def _on_accept(self, src, msg: Accept, now) -> list:
        self._see(msg.ballot)
        if msg.ballot < self.promised:
            log.debug("node %d ignores stale accept %s", self.id, msg.ballot)
            return [(src, Nack(msg.ballot, self.promised))]
        self._promise_up_to(msg.ballot)
        if src != self.id:
            self._step_down(msg.ballot, now)
        self.accepted[msg.slot] = (msg.ballot, msg.value)
        self._persist(ACCEPT, accept_payload(msg.slot, msg.ballot, msg.value))
        return [(src, Accepted(msg.ballot, msg.slot))]

    # -- proposer responses --------------------------------------------------

    def _on_promise(self, src, msg: Promise, now) -> list:
        if self.phase != "preparing" or msg.ballot != self.ballot:
            return []
        self.promises[src] = msg
        if len(self.promises) >= self.majority:
            return self._become_leader(now)
        return []

    def _on_nack(self, src, msg: Nack, now) -> list:
        self._see(msg.promised)
        if self.ballot is not None and msg.ballot == self.ballot and msg.promised > self.ballot:
            self._step_down(msg.promised, now)
        return []

    def _on_accepted(self, src, msg: Accepted, now) -> list:
        if self.phase != "leading" or msg.ballot != self.ballot or msg.slot not in self.proposals:
            return []
        votes = self.accepts.setdefault(msg.slot, set())
        votes.add(src)
        if len(votes) < self.majority:
            return []
        value = self.proposals[msg.slot]
        out = self._learn(msg.slot, value, now)
        out += self._broadcast(Decide(msg.slot, value), include_self=False)
        return out

    # -- client and follower traffic ---------------------------------------------

    def _on_forward(self, src, msg: Forward, now) -> list:
        values = [v for v in msg.values if v not in self.decided_values]
        if not values:
            return []
        if self.phase != "idle":
            return self._route(values, now)
        leader_alive = now - self.last_contact < self.election_timeout
        if self.leader_hint != self.id and leader_alive:
            return [(self.leader_hint, Forward(tuple(values)))]
        self.leader_hint = self.id
        return self._route(values, now)

    def _on_heartbeat(self, src, msg: Heartbeat, now) -> list:
        self._see(msg.ballot)
        if msg.ballot < self.promised:
            return [(src, Nack(msg.ballot, self.promised))]
        previous = self.leader_hint
        self._step_down(msg.ballot, now)
        self.known_frontier = max(self.known_frontier, msg.frontier)
        out = []
        if self.pending and previous != self.leader_hint:
            self.last_forward = now
            out.append((self.leader_hint, Forward(tuple(self.pending))))
        if self.known_frontier > self.frontier and now - self.last_catchup >= self.rtt:
            self.last_catchup = now
            out.append((src, CatchupReq(self.frontier)))
        return out

    def _on_catchup(self, src, msg: CatchupReq, now) -> list:
        out = []
        for slot in range(msg.low, msg.low + CATCHUP_BATCH):
            if slot in self.decided:
                out.append((src, Decide(slot, self.decided[slot])))
        return out
