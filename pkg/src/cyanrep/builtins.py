"""Static description of the built-in prototypes.

Only signatures live here; the interpreter supplies behaviour. ``Any`` is
the implicit root every prototype without ``extends`` descends from.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

ROOT = "Any"
SERIALIZABLE_TYPES = ("String", "Int", "Long")


@dataclass(frozen=True)
class BuiltinMethod:
    owner: str
    selector: str
    group_sizes: tuple = ()
    return_type: Optional[str] = None
    abstract: bool = False


@dataclass
class BuiltinProto:
    name: str
    extends: Optional[str]
    methods: dict = field(default_factory=dict)
    # whether `new` allocates an instance of it
    instantiable: bool = False


def _proto(name, extends, specs, instantiable=False) -> BuiltinProto:
    methods = {}
    for selector, sizes, ret, *rest in specs:
        methods[selector] = BuiltinMethod(name, selector, tuple(sizes), ret, bool(rest and rest[0]))
    return BuiltinProto(name, extends, methods, instantiable)


def _arith(name):
    return [(op, (1,), name) for op in ("+", "-", "*")]


BUILTINS: dict[str, BuiltinProto] = {
    p.name: p
    for p in [
        _proto(ROOT, None, [("println", (), None), ("asString", (), "String")]),
        _proto("String", ROOT, [("size", (), "Int")]),
        _proto("Int", ROOT, _arith("Int")),
        _proto("Long", ROOT, _arith("Long")),
        _proto("Array", ROOT, [("size", (), "Int")]),
        _proto("Context", ROOT, [("getTreplica", (), "Treplica"), ("setTreplica:", (1,), None)],
               instantiable=True),
        _proto("Action", ROOT, [("executeOn:", (1,), None, True)]),
        _proto("Treplica", ROOT,
               [("runMachine:numberProcess:rtt:path:", (1, 1, 1, 1), None), ("execute:", (1,), None)],
               instantiable=True),
        _proto("System", ROOT, [("currentTimeMillis", (), "Long")]),
        _proto("Random", ROOT, [("random", (), "Int")], instantiable=True),
    ]
}


def base_type(type_name: str) -> str:
    """``Array<String>`` -> ``Array``."""
    return type_name.split("<", 1)[0]


def type_arguments(type_name: str) -> list[str]:
    if "<" not in type_name:
        return []
    inner = type_name[type_name.index("<") + 1: type_name.rindex(">")]
    args, depth, start = [], 0, 0
    for i, c in enumerate(inner):
        if c == "<":
            depth += 1
        elif c == ">":
            depth -= 1
        elif c == "," and depth == 0:
            args.append(inner[start:i].strip())
            start = i + 1
    args.append(inner[start:].strip())
    return args
