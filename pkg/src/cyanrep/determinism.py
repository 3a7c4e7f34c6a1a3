"""Call-graph search for non-deterministic calls inside replicated actions.

Nodes are ``(prototype, selector)`` pairs. A send through static type ``T``
gets an edge to the method ``T`` would run *and* to every override in a
sub-prototype of ``T``, so the edge set over-approximates any dispatch the
interpreter can perform. Sends whose receiver type is unknown fan out to
every prototype that implements the selector.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

from .constructors import CONSTRUCTOR_FOR
from .nodes import Identifier, MessageSend, stmt_exprs, walk_expr
from .resolver import CONSTRUCTOR_SELECTORS, Program

Node = tuple  # (prototype, selector)

DEFAULT_ENTRIES = (("System", "currentTimeMillis"), ("Random", "random"))
_INIT_FOR = {new: init for init, new in CONSTRUCTOR_FOR.items()}


class RegistryError(ValueError):
    pass


@dataclass(frozen=True)
class NonDetRegistry:
    entries: frozenset = frozenset()

    def __or__(self, other: "NonDetRegistry") -> "NonDetRegistry":
        return NonDetRegistry(self.entries | other.entries)

    def matching(self, node: Node, program: Program) -> list[Node]:
        """Registry entries ``node`` violates: exact match or an override of one."""
        proto, sel = node
        hits = []
        for entry in sorted(self.entries):
            if entry[1] != sel:
                continue
            if entry[0] == proto or (program.is_known(entry[0]) and program.is_subprototype(proto, entry[0])):
                hits.append(entry)
        return hits


def default_registry() -> NonDetRegistry:
    return NonDetRegistry(frozenset(DEFAULT_ENTRIES))


def parse_registry(text: str, origin: str = "<registry>") -> NonDetRegistry:
    entries = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise RegistryError(f"{origin}:{lineno}: expected 'Prototype selector', got {raw.strip()!r}")
        entries.add((parts[0], parts[1]))
    return NonDetRegistry(frozenset(entries))


def load_registry(path) -> NonDetRegistry:
    p = Path(path)
    return parse_registry(p.read_text(encoding="utf-8"), origin=str(p))


@dataclass
class CallGraph:
    edges: dict = field(default_factory=dict)

    @property
    def nodes(self) -> set:
        out = set(self.edges)
        for targets in self.edges.values():
            out.update(targets)
        return out

    def successors(self, node: Node) -> list:
        return self.edges.get(node, [])


def _targets(program: Program, static: str, selector: str) -> set:
    found = program.lookup(static, selector)
    out = set()
    if found is not None:
        out.add((found[0], selector))
    for sub in program.subprototypes(static):
        if program.own_method(sub, selector) is not None:
            out.add((sub, selector))
    return out


def _send_targets(program: Program, scope, send: MessageSend) -> set:
    sel = send.selector.text
    rt = scope.type_of(send.receiver)
    if rt is None:
        return {(p, sel) for p in program.implementors(sel)}
    if rt.meta and sel in CONSTRUCTOR_SELECTORS:
        if program.own_method(rt.name, sel) is not None:
            return {(rt.name, sel)}
        return set()
    if rt.meta and sel == "cast:":
        return set()
    return _targets(program, rt.name, sel)


def build_call_graph(program: Program) -> CallGraph:
    edges: dict = {}
    for name in sorted(program.protos):
        proto = program.protos[name]
        for m in proto.methods:
            node = (name, m.selector.text)
            out = set()
            if m.synthetic:
                init = _INIT_FOR.get(m.selector.text)
                if init and proto.method(init) is not None:
                    out.add((name, init))
                edges[node] = sorted(out)
                continue
            scope = program.scope(name, m, upto=0)
            for stmt in m.body:
                for root in stmt_exprs(stmt):
                    for e in walk_expr(root):
                        if isinstance(e, MessageSend):
                            out |= _send_targets(program, scope, e)
                        elif isinstance(e, Identifier) and scope.classify(e.name) == "method":
                            out |= _targets(program, name, e.name)
                scope.declare(stmt)
            edges[node] = sorted(out)
    return CallGraph(edges)


def reachable(entry: Node, graph: CallGraph) -> dict:
    """Breadth-first search; maps every reachable node to a shortest path from ``entry``."""
    paths = {entry: (entry,)}
    queue = deque([entry])
    while queue:
        node = queue.popleft()
        for nxt in graph.successors(node):
            if nxt not in paths:
                paths[nxt] = paths[node] + (nxt,)
                queue.append(nxt)
    return paths


@dataclass(frozen=True)
class Finding:
    entry: Node
    violation: Node
    path: tuple

    def render_path(self) -> str:
        return " -> ".join(f"{p}.{s}" for p, s in self.path)


def check_action_method(entry: Node, graph: CallGraph, registry: NonDetRegistry, program: Program) -> list:
    """One finding per registry entry reachable from ``entry``, each with a shortest path."""
    paths = reachable(entry, graph)
    best: dict = {}
    # visit in BFS discovery order so the first hit per entry is a shortest path
    for node, path in sorted(paths.items(), key=lambda kv: (len(kv[1]), kv[0])):
        for hit in registry.matching(node, program):
            if hit not in best:
                best[hit] = Finding(entry, hit, path)
    return [best[k] for k in sorted(best)]
