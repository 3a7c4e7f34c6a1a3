from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cyanrep.errors import CyanRuntimeError, SerializationError
from cyanrep.interpreter import Interpreter, LocalHost, RecordingHost, dump_object, wrap64
from cyanrep.pipeline import compile_sources

from conftest import compile_fixture

HEADER = "package main\nimport treplica\n"


class CapturingHost(LocalHost):
    def __init__(self):
        super().__init__()
        self.handles = []

    def run_machine(self, interp, handle):
        self.handles.append(handle)


def booted(program, trace_writes=False):
    host = CapturingHost()
    interp = Interpreter(program, host, trace_writes=trace_writes)
    interp.run_main(["Program", "0"])
    return interp, host, host.handles[0].context


def run_source(*texts):
    interp = Interpreter(compile_sources(list(texts)).expanded)
    interp.run_main(["Program", "0"])
    return interp.output


def test_person_program_output():
    interp = Interpreter(compile_fixture("person_init").expanded)
    interp.run_main(["Program", "0"])
    assert interp.output == ["Meg", "4"]


def test_manual_replication_applies_update():
    interp, host, info = booted(compile_fixture("manual_replication").expanded)
    assert dump_object(interp.program, info) == 'Info{text="text", number=0}'
    assert len(host.applied) == 1


def test_wrapper_call_goes_through_action(board_program):
    interp, host, board = booted(board_program)
    interp.send(board, "tag:value:", ["k", -3])
    interp.send(board, "add:", [5])
    assert dump_object(board_program, board) == 'Board{log="k=-3;", total=5, count=0}'
    assert len(host.applied) == 2


def test_recording_host_defers_application(board_program):
    host = RecordingHost()
    interp = Interpreter(board_program, host)
    interp.run_main(["Program", "0"])
    board = host.handles[0].context
    interp.send(board, "append:", ["x"])
    assert len(host.submitted) == 1
    assert board.slots["log"] == ""


def test_integers_wrap_at_64_bits():
    assert wrap64(2**63) == -(2**63)
    out = run_source("object Program\n func run { (9223372036854775807 + 1) println }\nend")
    assert out == [str(-(2**63))]


def test_string_concat_with_numbers():
    out = run_source('object Program\n func run { ("a" ++ 1 ++ "b") println }\nend')
    assert out == ["a1b"]


def test_nil_receiver_is_runtime_error():
    src = "object Program\n func run { var Program p; p run }\nend"
    with pytest.raises(CyanRuntimeError):
        run_source(src)


def test_runaway_recursion_is_runtime_error():
    with pytest.raises(CyanRuntimeError):
        run_source("object Program\n func run { self run }\nend")


def test_action_round_trips_through_bytes(board_program):
    interp, _, _ = booted(board_program)
    action = interp.send(interp.prototype("BoardtagValue"), "new:", ["key", 12])
    data = interp.serialize_action(action)
    again = interp.materialize_action(data)
    assert again.proto == "BoardtagValue" and again.slots == action.slots
    assert interp.serialize_action(again) == data


def test_unknown_action_bytes_rejected(board_program):
    from cyanrep.serialization import encode_action

    interp, _, _ = booted(board_program)
    with pytest.raises(SerializationError):
        interp.materialize_action(encode_action("Nope", []))
    with pytest.raises(SerializationError):
        interp.materialize_action(encode_action("Boardadd", [("String", "x")]))


def test_execute_inside_apply_rejected(board_program):
    interp, _, board = booted(board_program)
    data = interp.serialize_action(interp.send(interp.prototype("Boardappend"), "new:", ["z"]))
    interp.applying += 1
    try:
        with pytest.raises(CyanRuntimeError, match="being applied"):
            interp.send(board, "append:", ["z"])
    finally:
        interp.applying -= 1
    interp.apply_action(board, data)
    assert board.slots["log"] == "z;"


calls = st.lists(st.one_of(
    st.tuples(st.just("append:"), st.text(max_size=3).map(lambda s: [s])),
    st.tuples(st.just("add:"), st.integers(-2**63, 2**63 - 1).map(lambda n: [n])),
    st.tuples(st.just("tag:value:"), st.tuples(st.text(max_size=2), st.integers(-5, 5)).map(list)),
    st.tuples(st.just("reset"), st.just([])),
), max_size=12)


@settings(max_examples=60, deadline=None)
@given(calls)
def test_context_written_only_under_execute_on(board_program, seq):
    interp, _, board = booted(board_program, trace_writes=True)
    for sel, args in seq:
        interp.send(board, sel, args)
    for w in interp.writes:
        if w.target is board:
            assert any(sel == "executeOn:" for _, sel in w.stack), w
