from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cyanrep.determinism import (NonDetRegistry, RegistryError, build_call_graph, check_action_method,
                                 default_registry, parse_registry, reachable)
from cyanrep.parser import parse_source
from cyanrep.pipeline import compile_sources, compile_units, load_units
from cyanrep.resolver import resolve

from conftest import FIXTURES, compile_fixture


def program(*texts):
    return resolve([parse_source(t) for t in texts])


def simple_paths(graph, start):
    """Every simple path from ``start``, by brute force."""
    out = []

    def go(path):
        out.append(tuple(path))
        for nxt in graph.successors(path[-1]):
            if nxt not in path:
                go(path + [nxt])

    go([start])
    return out


def test_registry_parsing():
    reg = parse_registry("# comment\nSystem currentTimeMillis\n\n Info  ageInSeconds  # trailing\n")
    assert reg.entries == {("System", "currentTimeMillis"), ("Info", "ageInSeconds")}
    with pytest.raises(RegistryError, match=":2:"):
        parse_registry("A b\nbroken\n")


def test_chain_path_matches_enumeration():
    prog = program("object C\n func a { self b }\n func b { self c }\n func c { }\n func d { self a }\nend")
    graph = build_call_graph(prog)
    reg = NonDetRegistry(frozenset({("C", "c")}))
    [finding] = check_action_method(("C", "a"), graph, reg, prog)
    assert finding.path == (("C", "a"), ("C", "b"), ("C", "c"))
    oracle = [p for p in simple_paths(graph, ("C", "a")) if p[-1] == ("C", "c")]
    assert min(map(len, oracle)) == len(finding.path)


def test_unreachable_entry_is_silent():
    prog = program("object C\n func a { }\n func c { }\nend")
    reg = NonDetRegistry(frozenset({("C", "c")}))
    assert check_action_method(("C", "a"), build_call_graph(prog), reg, prog) == []


def test_override_reached_through_static_type():
    prog = program("object A\n func t -> Int { return 1 }\nend",
                   "object B extends A\n override func t -> Int { return System currentTimeMillis }\nend",
                   "object U\n func go: A a -> Int { return a t }\nend")
    findings = check_action_method(("U", "go:"), build_call_graph(prog), default_registry(), prog)
    assert [f.violation for f in findings] == [("System", "currentTimeMillis")]
    assert findings[0].path[1] == ("B", "t")


def test_override_of_registered_method_counts():
    prog = program("object A\n func t -> Int { return 1 }\nend",
                   "object B extends A\n override func t -> Int { return 2 }\n func go -> Int { return self t }\nend")
    reg = NonDetRegistry(frozenset({("A", "t")}))
    findings = check_action_method(("B", "go"), build_call_graph(prog), reg, prog)
    assert [f.path[-1] for f in findings] == [("B", "t")]


def test_fixture_findings_per_registry():
    reg = parse_registry((FIXTURES / "nondeterministic" / "ageInSeconds.registry").read_text())
    comp = compile_units(load_units([FIXTURES / "nondeterministic"]), registry=reg)
    assert len(comp.diagnostics) == 1
    assert comp.diagnostics[0].path[-1] == ("Info", "ageInSeconds")
    both = compile_units(load_units([FIXTURES / "nondeterministic"]), registry=reg | default_registry())
    assert len(both.diagnostics) == 2


def test_replicated_fixture_is_clean():
    assert compile_fixture("replicated_info").diagnostics == []
    assert compile_fixture("replicated_board").diagnostics == []


def test_nested_actions_rejected():
    src = ("package main\nimport treplica\nobject I extends Context\n"
           " @treplicaAction\n func a { self b }\n @treplicaAction\n func b { }\nend")
    comp = compile_sources([src])
    assert not comp.ok
    assert any("nest" in d.message for d in comp.diagnostics)


# -- soundness over random call graphs ----------------------------------------

graphs = st.integers(2, 7).flatmap(lambda n: st.tuples(
    st.just(n),
    st.lists(st.lists(st.integers(0, n - 1), max_size=3), min_size=n, max_size=n),
    st.sets(st.integers(0, n - 1), max_size=3),
))


@settings(max_examples=120, deadline=None)
@given(graphs)
def test_findings_agree_with_path_enumeration(case):
    n, calls, flagged = case
    methods = []
    for i in range(n):
        body = "; ".join(f"self m{j}" for j in calls[i])
        methods.append(f" func m{i} {{ {body} }}")
    prog = program("object G\n" + "\n".join(methods) + "\nend")
    graph = build_call_graph(prog)
    reg = NonDetRegistry(frozenset(("G", f"m{i}") for i in flagged))
    entry = ("G", "m0")
    findings = check_action_method(entry, graph, reg, prog)
    paths = simple_paths(graph, entry)
    expected = {p[-1] for p in paths if p[-1][1] in {f"m{i}" for i in flagged}}
    assert {f.violation for f in findings} == expected
    for f in findings:
        assert f.path[0] == entry and f.path[-1] == f.violation
        for a, b in zip(f.path, f.path[1:]):
            assert b in graph.successors(a)
        assert len(f.path) == min(len(p) for p in paths if p[-1] == f.violation)
    assert set(reachable(entry, graph)) == {p[-1] for p in paths}
