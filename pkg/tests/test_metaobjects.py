from __future__ import annotations

import pytest

from cyanrep.errors import CompileError
from cyanrep.metaobjects import ActionNaming, fresh_name
from cyanrep.nodes import MessageSend, VarDecl
from cyanrep.pipeline import compile_sources

from conftest import compile_fixture

HEADER = "package main\nimport treplica\n"


def test_action_naming():
    n = ActionNaming("Info", "setText:")
    assert n.action_name == "InfosetText"
    assert n.renamed_selector == "setTextTreplicaAction:"
    m = ActionNaming("Board", "tag:value:")
    assert m.action_name == "BoardtagValue"
    assert m.renamed_selector == "tagTreplicaAction:value:"
    assert ActionNaming("Board", "reset").renamed_selector == "resetTreplicaAction"


def test_fresh_name_skips_taken():
    assert fresh_name("obj", set()) == "obj"
    assert fresh_name("obj", {"obj", "obj1"}) == "obj2"


def test_init_expansion_builds_constructor():
    exp = compile_fixture("person_init").expanded
    person = exp.protos["Person"]
    init = person.method("init:")
    assert [(p.type_name, p.name) for p in init.params] == [("String", "name"), ("Int", "age")]
    assert person.method("new:").synthetic


def test_action_expansion_shape(board_program):
    board = board_program.protos["Board"]
    for sel in ("append:", "add:", "tag:value:", "reset"):
        naming = ActionNaming("Board", sel)
        wrapper = board.method(sel)
        assert board.method(naming.renamed_selector) is not None
        action = board_program.protos[naming.action_name]
        assert action.extends == "Action"
        assert action.method("executeOn:").override
        assert isinstance(wrapper.body[0], VarDecl)
        sends = [s.expr for s in wrapper.body[1:]]
        assert sends[0].selector.text == "execute:"
    assert [f.name for f in board_program.protos["BoardtagValue"].fields] == ["keyVar", "vVar"]


def test_replicated_init_rewrites_declaration(board_program):
    run = board_program.protos["Program"].method("run:")
    sends = [s.expr for s in run.body if hasattr(s, "expr") and isinstance(s.expr, MessageSend)]
    selectors = [s.selector.text for s in sends]
    assert selectors == ["runMachine:numberProcess:rtt:path:", "setTreplica:"]


def test_generated_names_avoid_collisions():
    src = HEADER + ("object Info extends Context\n var String text\n"
                    " @treplicaAction\n func setText: String action { text = action }\nend")
    comp = compile_sources([src])
    wrapper = comp.expanded.protos["Info"].method("setText:")
    assert wrapper.body[0].name == "action1"


@pytest.mark.parametrize("body, fragment", [
    ("object P\n @treplicaAction\n func f: Int x { }\nend", "not a sub-prototype of Context"),
    ("object P extends Context\n @treplicaAction\n func f: Array<String> x { }\nend", "non-serializable"),
    ("object P extends Context\n @treplicaAction\n func f -> Int { return 1 }\nend", "returns a value"),
    ("object P extends Context\n @treplicaAction\n var Int x\nend", "cannot be attached"),
    ("object P\n @init(zz)\n Int x\nend", "no field 'zz'"),
])
def test_misuse_is_diagnosed(body, fragment):
    with pytest.raises(CompileError) as info:
        compile_sources([HEADER + body])
    assert any(fragment in d.message for d in info.value.diagnostics)


def test_treplica_names_need_import():
    with pytest.raises(CompileError, match="is its package imported"):
        compile_sources(["object P extends Context\n @treplicaAction\n func f { }\nend"])
