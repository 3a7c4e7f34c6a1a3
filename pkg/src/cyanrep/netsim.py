"""Deterministic discrete-event network.

Time is integer simulated milliseconds. Every event sits in one heap keyed by
``(time, counter)``, where the counter is assigned at insertion, so the
processing order is total and reproducible. The wall clock is never read.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

from .rng import XorShift64Star


class LivenessTimeout(Exception):
    """The simulation hit its time cap with obligations still pending."""


@dataclass(frozen=True)
class Partition:
    start: int
    end: int
    groups: tuple  # tuple of frozensets of replica ids

    def active(self, now: int) -> bool:
        return self.start <= now < self.end

    def separates(self, a: int, b: int) -> bool:
        # replicas listed in no group are isolated from everyone
        ga = next((i for i, g in enumerate(self.groups) if a in g), None)
        gb = next((i for i, g in enumerate(self.groups) if b in g), None)
        return ga is None or gb is None or ga != gb

    @classmethod
    def parse(cls, text: str) -> "Partition":
        """``start..end:0|1,2`` -> replicas {0} and {1, 2} cut off from each other."""
        span, _, split = text.partition(":")
        start, _, end = span.partition("..")
        groups = tuple(frozenset(int(x) for x in part.split(",") if x.strip())
                       for part in split.split("|"))
        return cls(int(start), int(end), groups)


def default_delay(rtt: int) -> tuple:
    """One-way delay range with mean ``rtt / 2``."""
    lo = rtt // 4
    return (lo, max(lo, (3 * rtt) // 4))


@dataclass
class NetConfig:
    seed: int = 0
    drop: float = 0.0
    dup: float = 0.0
    delay: Optional[tuple] = None  # (min, max); None derives it from the rtt
    partitions: tuple = ()

    def __post_init__(self):
        if not 0.0 <= self.drop <= 1.0:
            raise ValueError(f"drop probability {self.drop} outside [0, 1]")
        if not 0.0 <= self.dup <= 1.0:
            raise ValueError(f"duplicate probability {self.dup} outside [0, 1]")
        if self.delay is not None:
            lo, hi = self.delay
            if lo < 0 or lo > hi:
                raise ValueError(f"bad delay range {lo}..{hi}")

    def delay_range(self, rtt: int) -> tuple:
        return tuple(self.delay) if self.delay is not None else default_delay(rtt)


def parse_delay(text: str) -> tuple:
    lo, sep, hi = text.partition("..")
    if not sep:
        raise ValueError(f"expected MIN..MAX, got {text!r}")
    return (int(lo), int(hi))


@dataclass(order=True)
class Event:
    time: int
    counter: int
    kind: str = field(compare=False)
    src: Any = field(compare=False)
    dst: Any = field(compare=False)
    payload: Any = field(compare=False)
    action: Optional[Callable] = field(compare=False, default=None)
    msg_id: Optional[int] = field(compare=False, default=None)


def summarize(payload) -> str:
    fn = getattr(payload, "summary", None)
    return fn() if callable(fn) else str(payload)


class Simulator:
    def __init__(self, config: Optional[NetConfig] = None, rtt: int = 200, trace: bool = False):
        self.config = config or NetConfig()
        self.rtt = rtt
        self.rng = XorShift64Star(self.config.seed)
        self.now = 0
        self._queue: list[Event] = []
        self._counter = 0
        self._msg_ids = 0
        self.handlers: dict = {}
        self.trace: Optional[list[str]] = [] if trace else None
        self.stats = {"sent": 0, "dropped": 0, "duplicated": 0, "delivered": 0, "lost": 0}

    # -- tracing -------------------------------------------------------------

    def log(self, kind: str, src, dst, summary: str) -> None:
        if self.trace is not None:
            s = "-" if src is None else src
            d = "-" if dst is None else dst
            self.trace.append(f"{self.now} {kind} {s} {d} {summary}".rstrip())

    # -- scheduling ----------------------------------------------------------

    def schedule(self, at: int, kind: str, action: Callable, src=None, dst=None, payload=None,
                 msg_id=None) -> Event:
        if at < self.now:
            raise ValueError(f"cannot schedule in the past ({at} < {self.now})")
        ev = Event(at, self._counter, kind, src, dst, payload, action, msg_id)
        self._counter += 1
        heapq.heappush(self._queue, ev)
        return ev

    def register(self, node, handler: Callable) -> None:
        """``handler(src, message)`` receives deliveries addressed to ``node``."""
        self.handlers[node] = handler

    def unregister(self, node) -> None:
        self.handlers.pop(node, None)

    def send(self, src, dst, message) -> bool:
        """Returns whether at least one copy was scheduled."""
        self.stats["sent"] += 1
        self._msg_ids += 1
        mid = self._msg_ids
        summary = f"#{mid} {summarize(message)}"
        self.log("send", src, dst, summary)
        cfg = self.config
        for p in cfg.partitions:
            if p.active(self.now) and p.separates(src, dst):
                self.stats["dropped"] += 1
                self.log("cut", src, dst, summary)
                return False
        if self.rng.chance(cfg.drop):
            self.stats["dropped"] += 1
            self.log("drop", src, dst, summary)
            return False
        copies = 1
        if self.rng.chance(cfg.dup):
            copies = 2
            self.stats["duplicated"] += 1
            self.log("dup", src, dst, summary)
        lo, hi = cfg.delay_range(self.rtt)
        for _ in range(copies):
            self.schedule(self.now + self.rng.randint(lo, hi), "deliver", self._deliver,
                          src, dst, message, mid)
        return True

    def _deliver(self, ev: Event) -> None:
        handler = self.handlers.get(ev.dst)
        summary = f"#{ev.msg_id} {summarize(ev.payload)}"
        if handler is None:
            self.stats["lost"] += 1
            self.log("lost", ev.src, ev.dst, summary)
            return
        self.stats["delivered"] += 1
        self.log("deliver", ev.src, ev.dst, summary)
        handler(ev.src, ev.payload)

    # -- running -------------------------------------------------------------

    @property
    def pending_events(self) -> int:
        return len(self._queue)

    def peek_time(self) -> Optional[int]:
        return self._queue[0].time if self._queue else None

    def step(self) -> bool:
        """Process one event; False when the queue is empty."""
        if not self._queue:
            return False
        ev = heapq.heappop(self._queue)
        self.now = ev.time
        if ev.kind != "deliver" and self.trace is not None:
            self.log(ev.kind, ev.src, ev.dst, summarize(ev.payload) if ev.payload is not None else "")
        ev.action(ev)
        return True

    def run(self, stop: Optional[Callable[[], bool]] = None, max_time: Optional[int] = None) -> str:
        """Run until ``stop()`` holds, the queue drains, or the next event is past ``max_time``.

        Returns ``"stopped"``, ``"idle"`` or ``"timeout"``.
        """
        while True:
            if stop is not None and stop():
                return "stopped"
            nxt = self.peek_time()
            if nxt is None:
                return "idle"
            if max_time is not None and nxt > max_time:
                return "timeout"
            self.step()
