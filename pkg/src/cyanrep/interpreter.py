"""Tree-walking interpreter for expanded programs.

Values are Python ``int`` (Int and Long, both 64-bit signed), ``str``,
``list`` (Array), ``None`` (nil) and :class:`Obj`. Every prototype has a
unique singleton :class:`Obj` reachable by its name; ``new`` allocates
fresh instances.

Replication lives behind a :class:`Host`. :class:`LocalHost` applies each
action as soon as it is executed; the simulated cluster supplies its own
host that routes actions through consensus.
"""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

from .builtins import BUILTINS, BuiltinMethod
from .constructors import CONSTRUCTOR_FOR
from .errors import CyanRuntimeError, SerializationError
from .nodes import (
    Assign, Concat, ExprStmt, FieldRef, Identifier, Index, IntLit, MessageSend, MethodDecl,
    Return, SelfRef, StringLit, VarDecl,
)
from .resolver import Program
from .rng import XorShift64Star
from .serialization import TAG_FOR_TYPE, decode_action, encode_action

MAX_CALL_DEPTH = 800
_MIN_RECURSION_LIMIT = 20000
_INIT_FOR = {new: init for init, new in CONSTRUCTOR_FOR.items()}
_WRAP = 1 << 64
_HALF = 1 << 63

DEFAULT_VALUES = {"Int": 0, "Long": 0, "String": ""}


def wrap64(n: int) -> int:
    return ((n + _HALF) % _WRAP) - _HALF


@dataclass(eq=False)
class Obj:
    proto: str
    slots: dict = field(default_factory=dict)
    is_prototype: bool = False
    # Context instances: the Treplica object attached by setTreplica:
    machine: Optional["Obj"] = None
    # built-in payload: MachineHandle for Treplica objects, generator for Random
    native: Any = None

    def __repr__(self) -> str:
        kind = "prototype " if self.is_prototype else ""
        return f"<{kind}{self.proto} @{id(self):x}>"


@dataclass
class MachineHandle:
    replica: int
    process_count: int
    rtt: int
    path: str
    context: Obj
    link: Any = None  # host-specific consensus endpoint


@dataclass(frozen=True)
class FieldWrite:
    target: Obj
    field: str
    value: Any
    # (prototype, selector) of every active frame, outermost first
    stack: tuple


class Host:
    """Bridge from ``Treplica`` sends to whatever orders actions."""

    def now(self) -> int:
        return 0

    def run_machine(self, interp: "Interpreter", handle: MachineHandle) -> None:
        pass

    def execute(self, interp: "Interpreter", handle: MachineHandle, action: Obj) -> None:
        raise NotImplementedError


class LocalHost(Host):
    """Degenerate replication: every executed action is applied at once."""

    def __init__(self):
        self.clock = 0
        self.applied: list[bytes] = []

    def now(self) -> int:
        self.clock += 1
        return self.clock

    def execute(self, interp, handle, action):
        data = interp.serialize_action(action)
        self.applied.append(data)
        interp.apply_action(handle.context, data)


class RecordingHost(Host):
    """Accepts actions without applying them. Used to build oracle start states."""

    def __init__(self):
        self.handles: list[MachineHandle] = []
        self.submitted: list[bytes] = []

    def run_machine(self, interp, handle):
        self.handles.append(handle)

    def execute(self, interp, handle, action):
        self.submitted.append(interp.serialize_action(action))


class _Return(Exception):
    def __init__(self, value):
        self.value = value


class Interpreter:
    def __init__(self, program: Program, host: Optional[Host] = None, replica_id: int = 0,
                 out: Optional[Callable[[str], None]] = None, trace_writes: bool = False):
        self.program = program
        self.host = host if host is not None else LocalHost()
        self.replica_id = replica_id
        self.output: list[str] = []
        self._out = out
        self.trace_writes = trace_writes
        self.writes: list[FieldWrite] = []
        self.stack: list[tuple] = []
        self.applying = 0
        self.random = XorShift64Star(replica_id)
        self._singletons: dict[str, Obj] = {}
        if sys.getrecursionlimit() < _MIN_RECURSION_LIMIT:
            sys.setrecursionlimit(_MIN_RECURSION_LIMIT)

    # -- entry points --------------------------------------------------------

    def run_main(self, argv: list[str]) -> None:
        prog = self.program
        if "Program" not in prog.protos:
            raise CyanRuntimeError("startup: no prototype named Program")
        main = self.prototype("Program")
        if prog.lookup("Program", "run:") is not None:
            self.send(main, "run:", [list(argv)])
        elif prog.lookup("Program", "run") is not None:
            self.send(main, "run", [])
        else:
            raise CyanRuntimeError("startup: Program has no method run: or run")

    def prototype(self, name: str) -> Obj:
        obj = self._singletons.get(name)
        if obj is None:
            if not self.program.is_known(name):
                raise CyanRuntimeError(f"unknown prototype {name}")
            obj = self._allocate(name)
            obj.is_prototype = True
            self._singletons[name] = obj
        return obj

    def _allocate(self, name: str) -> Obj:
        slots = {f.name: DEFAULT_VALUES.get(f.type_name) for f in self.program.all_fields(name)}
        obj = Obj(name, slots)
        if name == "Random" or self.program.is_subprototype(name, "Random"):
            obj.native = self.random
        return obj

    def instantiate(self, name: str) -> Obj:
        """A fresh instance with default field values; no ``init`` runs."""
        if not self.program.is_known(name):
            raise CyanRuntimeError(f"unknown prototype {name}")
        return self._allocate(name)

    # -- dispatch ------------------------------------------------------------

    def proto_of(self, value) -> str:
        if isinstance(value, Obj):
            return value.proto
        if isinstance(value, bool):
            raise CyanRuntimeError(f"unexpected host value {value!r}")
        if isinstance(value, int):
            return "Int"
        if isinstance(value, str):
            return "String"
        if isinstance(value, list):
            return "Array"
        raise CyanRuntimeError("message sent to nil")

    def send(self, receiver, selector: str, args: list):
        if receiver is None:
            raise CyanRuntimeError(f"nil does not understand '{selector}'")
        proto = self.proto_of(receiver)
        if isinstance(receiver, Obj) and receiver.is_prototype:
            if selector in _INIT_FOR:
                return self._construct(receiver.proto, selector, args)
            if selector == "cast:":
                return self._cast(receiver.proto, args[0])
        elif selector in _INIT_FOR:
            raise CyanRuntimeError(f"'{selector}' sent to an instance of {proto}, not a prototype")
        found = self.program.lookup(proto, selector)
        if found is None:
            raise CyanRuntimeError(f"{proto} does not understand '{selector}'")
        owner, method = found
        if isinstance(method, BuiltinMethod):
            return self._native(method, receiver, args)
        return self.invoke(receiver, owner, method, args)

    def _construct(self, name: str, selector: str, args):
        prog = self.program
        if prog.is_builtin(name):
            if selector == "new" and BUILTINS[name].instantiable:
                return self._allocate(name)
            raise CyanRuntimeError(f"{name} cannot be instantiated with '{selector}'")
        if prog.own_method(name, selector) is None:
            if selector == "new" and prog.has_default_new(name):
                return self._allocate(name)
            raise CyanRuntimeError(f"{name} has no constructor '{selector}'")
        obj = self._allocate(name)
        init = prog.own_method(name, _INIT_FOR[selector])
        self.invoke(obj, name, init, args)
        return obj

    def _cast(self, target: str, value):
        if value is None:
            raise CyanRuntimeError(f"cannot cast nil to {target}")
        actual = self.proto_of(value)
        if not self.program.is_subprototype(actual, target):
            raise CyanRuntimeError(f"cast error: {actual} is not {target}")
        return value

    def invoke(self, receiver, owner: str, method: MethodDecl, args: list):
        params = method.params
        if len(params) != len(args):
            raise CyanRuntimeError(f"{owner}.{method.selector} expects {len(params)} "
                                   f"argument(s), got {len(args)}")
        if len(self.stack) >= MAX_CALL_DEPTH:
            raise CyanRuntimeError(f"call depth limit ({MAX_CALL_DEPTH}) exceeded in "
                                   f"{owner}.{method.selector}")
        frame = _Frame(receiver, owner, {p.name: a for p, a in zip(params, args)})
        self.stack.append((owner, method.selector.text))
        try:
            for stmt in method.body:
                self.exec_stmt(frame, stmt)
        except _Return as ret:
            return ret.value
        finally:
            self.stack.pop()
        return None

    # -- statements and expressions -------------------------------------------

    def exec_stmt(self, frame: "_Frame", stmt):
        if isinstance(stmt, VarDecl):
            value = self.eval(frame, stmt.init) if stmt.init is not None else DEFAULT_VALUES.get(stmt.type_name)
            frame.locals[stmt.name] = value
        elif isinstance(stmt, Assign):
            value = self.eval(frame, stmt.value)
            target = stmt.target
            if isinstance(target, Identifier) and target.name in frame.locals:
                frame.locals[target.name] = value
            else:
                self.write_field(frame.receiver, target.name, value)
        elif isinstance(stmt, Return):
            raise _Return(self.eval(frame, stmt.value) if stmt.value is not None else None)
        elif isinstance(stmt, ExprStmt):
            self.eval(frame, stmt.expr)
        else:
            raise CyanRuntimeError(f"cannot execute {type(stmt).__name__}")

    def write_field(self, obj, name: str, value):
        if not isinstance(obj, Obj) or name not in obj.slots:
            raise CyanRuntimeError(f"no field '{name}' to assign")
        obj.slots[name] = value
        if self.trace_writes:
            self.writes.append(FieldWrite(obj, name, value, tuple(self.stack)))

    def eval(self, frame: "_Frame", expr):
        if isinstance(expr, StringLit):
            return expr.value
        if isinstance(expr, IntLit):
            return wrap64(expr.value)
        if isinstance(expr, SelfRef):
            return frame.receiver
        if isinstance(expr, FieldRef):
            return self._read_field(frame.receiver, expr.name)
        if isinstance(expr, Identifier):
            return self._lookup_name(frame, expr.name)
        if isinstance(expr, Concat):
            return self.text_of(self.eval(frame, expr.left)) + self.text_of(self.eval(frame, expr.right))
        if isinstance(expr, Index):
            target = self.eval(frame, expr.target)
            idx = self.eval(frame, expr.index)
            if not isinstance(target, list) or not isinstance(idx, int):
                raise CyanRuntimeError("indexing needs an Array and an Int")
            if not 0 <= idx < len(target):
                raise CyanRuntimeError(f"index {idx} out of bounds for Array of size {len(target)}")
            return target[idx]
        if isinstance(expr, MessageSend):
            receiver = self.eval(frame, expr.receiver)
            args = [self.eval(frame, a) for a in expr.args]
            return self.send(receiver, expr.selector.text, args)
        raise CyanRuntimeError(f"cannot evaluate {type(expr).__name__}")

    def _read_field(self, obj, name: str):
        if not isinstance(obj, Obj) or name not in obj.slots:
            raise CyanRuntimeError(f"no field '{name}'")
        return obj.slots[name]

    def _lookup_name(self, frame, name: str):
        # same order as static classification: local, field, unary method, prototype
        if name in frame.locals:
            return frame.locals[name]
        prog = self.program
        if prog.field_decl(frame.owner, name) is not None:
            return self._read_field(frame.receiver, name)
        if prog.lookup(frame.owner, name) is not None:
            return self.send(frame.receiver, name, [])
        if prog.is_known(name):
            return self.prototype(name)
        raise CyanRuntimeError(f"unknown identifier '{name}'")

    # -- built-ins -----------------------------------------------------------

    def _native(self, method: BuiltinMethod, receiver, args):
        impl = _NATIVES.get((method.owner, method.selector))
        if impl is None or method.abstract:
            raise CyanRuntimeError(f"{self.proto_of(receiver)} does not implement "
                                   f"'{method.selector}'")
        return impl(self, receiver, args)

    def text_of(self, value) -> str:
        """String form used by ``println``, ``asString`` and ``++``."""
        if isinstance(value, str):
            return value
        if isinstance(value, Obj) and not value.is_prototype:
            found = self.program.lookup(value.proto, "asString")
            if found is not None and isinstance(found[1], MethodDecl):
                text = self.invoke(value, found[0], found[1], [])
                if not isinstance(text, str):
                    raise CyanRuntimeError(f"{value.proto}.asString did not return a String")
                return text
        return dump_value(self.program, value)

    def emit(self, line: str):
        self.output.append(line)
        if self._out is not None:
            self._out(line)

    # -- actions -------------------------------------------------------------

    def serialize_action(self, action) -> bytes:
        if not isinstance(action, Obj) or not self.program.is_subprototype(action.proto, "Action"):
            raise SerializationError(f"execute: needs an Action, got {self.proto_of(action)}")
        fields = []
        for f in self.program.all_fields(action.proto):
            if f.type_name not in TAG_FOR_TYPE:
                raise SerializationError(f"field {action.proto}.{f.name} has non-serializable "
                                         f"type {f.type_name}")
            fields.append((f.type_name, action.slots[f.name]))
        return encode_action(action.proto, fields)

    def materialize_action(self, data: bytes) -> Obj:
        decoded = decode_action(data)
        name = decoded.prototype
        prog = self.program
        if not prog.is_known(name) or not prog.is_subprototype(name, "Action"):
            raise SerializationError(f"decoded action names unknown Action prototype {name}")
        declared = prog.all_fields(name)
        if [f.type_name for f in declared] != [t for t, _ in decoded.fields]:
            raise SerializationError(f"decoded fields do not match the declaration of {name}")
        obj = self._allocate(name)
        for f, (_, value) in zip(declared, decoded.fields):
            obj.slots[f.name] = value
        return obj

    def apply_action(self, context: Obj, data: bytes) -> None:
        """Decode an action and run its ``executeOn:`` against ``context``."""
        action = self.materialize_action(data)
        self.applying += 1
        try:
            self.send(action, "executeOn:", [context])
        finally:
            self.applying -= 1


@dataclass
class _Frame:
    receiver: Any
    owner: str
    locals: dict


def _require(cond, message):
    if not cond:
        raise CyanRuntimeError(message)


def _arith(op):
    def impl(interp, receiver, args):
        other = args[0]
        _require(isinstance(other, int) and not isinstance(other, bool),
                 f"'{op}' needs an integer argument")
        if op == "+":
            return wrap64(receiver + other)
        if op == "-":
            return wrap64(receiver - other)
        return wrap64(receiver * other)
    return impl


def _println(interp, receiver, args):
    interp.emit(interp.text_of(receiver))


def _set_treplica(interp, receiver, args):
    value = args[0]
    _require(value is None or (isinstance(value, Obj) and value.proto == "Treplica"),
             "setTreplica: needs a Treplica")
    receiver.machine = value


def _get_treplica(interp, receiver, args):
    return receiver.machine


def _run_machine(interp, receiver, args):
    context, count, rtt, path = args
    prog = interp.program
    _require(isinstance(context, Obj) and prog.is_subprototype(context.proto, "Context"),
             "runMachine: needs a Context")
    _require(isinstance(count, int) and count >= 1, "numberProcess: must be at least 1")
    _require(isinstance(rtt, int) and rtt >= 0, "rtt: must be a non-negative Int")
    _require(isinstance(path, str) and path != "", "path: must be a non-empty String")
    _require(receiver.native is None, "runMachine: was already called on this Treplica")
    handle = MachineHandle(interp.replica_id, count, rtt, path, context)
    receiver.native = handle
    interp.host.run_machine(interp, handle)


def _execute(interp, receiver, args):
    handle = receiver.native
    _require(isinstance(handle, MachineHandle), "execute: before runMachine:")
    _require(not interp.applying, "execute: called while an action is being applied")
    action = args[0]
    _require(isinstance(action, Obj) and interp.program.is_subprototype(action.proto, "Action"),
             "execute: needs an Action")
    interp.host.execute(interp, handle, action)


def _random(interp, receiver, args):
    rng = receiver.native if isinstance(receiver, Obj) and receiver.native else interp.random
    return rng.next_u64() >> 1


_NATIVES = {
    ("Any", "println"): _println,
    ("Any", "asString"): lambda interp, r, a: interp.text_of(r),
    ("String", "size"): lambda interp, r, a: len(r),
    ("Array", "size"): lambda interp, r, a: len(r),
    ("Int", "+"): _arith("+"), ("Int", "-"): _arith("-"), ("Int", "*"): _arith("*"),
    ("Long", "+"): _arith("+"), ("Long", "-"): _arith("-"), ("Long", "*"): _arith("*"),
    ("Context", "setTreplica:"): _set_treplica,
    ("Context", "getTreplica"): _get_treplica,
    ("Treplica", "runMachine:numberProcess:rtt:path:"): _run_machine,
    ("Treplica", "execute:"): _execute,
    ("System", "currentTimeMillis"): lambda interp, r, a: interp.host.now(),
    ("Random", "random"): _random,
}


def dump_value(program: Program, value, _seen=None) -> str:
    """Canonical text for state comparison, e.g. ``Info{text="text", number=0}``."""
    if value is None:
        return "nil"
    if isinstance(value, str):
        return json.dumps(value, ensure_ascii=False)
    if isinstance(value, int):
        return str(value)
    if isinstance(value, list):
        return "[" + ", ".join(dump_value(program, v, _seen) for v in value) + "]"
    if isinstance(value, Obj):
        if value.is_prototype:
            return value.proto
        seen = _seen or set()
        if id(value) in seen:
            return f"{value.proto}{{...}}"
        seen = seen | {id(value)}
        parts = [f"{name}={dump_value(program, v, seen)}" for name, v in value.slots.items()]
        return f"{value.proto}{{{', '.join(parts)}}}"
    raise CyanRuntimeError(f"cannot dump {value!r}")


def dump_object(program: Program, obj) -> str:
    return dump_value(program, obj)
