"""Name and type resolution across source units.

:func:`resolve` binds every type name and ``extends`` link, computes the
sub-prototype relation, and reports the static errors the language defines
(unknown types, ``new`` sent to a non-prototype, annotations with no imported
metaobject, ...). The returned :class:`Program` is the query surface the
metaobject engine, the determinism checker, and the interpreter share.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

from .builtins import BUILTINS, ROOT, BuiltinMethod, base_type, type_arguments
from .constructors import CONSTRUCTOR_FOR
from .errors import CompileError, Diagnostic, error
from .nodes import (
    Assign, Concat, ExprStmt, FieldRef, Identifier, Index, IntLit, MessageSend,
    MethodDecl, PrototypeDecl, Return, SelfRef, SourceUnit, StringLit, VarDecl,
)

AUTO_IMPORTED = "cyan.lang"
CONSTRUCTOR_SELECTORS = frozenset(CONSTRUCTOR_FOR.values())
INIT_SELECTORS = frozenset(CONSTRUCTOR_FOR)


@dataclass(frozen=True)
class TypeRef:
    """Static type of an expression. ``meta`` marks a prototype used as a value."""

    name: str
    meta: bool = False

    @property
    def base(self) -> str:
        return base_type(self.name)


STRING = TypeRef("String")
INT = TypeRef("Int")


class Program:
    """A set of parsed units with resolved prototype relations."""

    def __init__(self, units: list[SourceUnit]):
        self.units = units
        self.protos: dict[str, PrototypeDecl] = {}
        self.unit_of: dict[str, SourceUnit] = {}
        for unit in units:
            for proto in unit.prototypes:
                self.protos.setdefault(proto.name, proto)
                self.unit_of.setdefault(proto.name, unit)

    # -- prototype relation --------------------------------------------------

    def is_known(self, name: str) -> bool:
        return name in self.protos or name in BUILTINS

    def is_builtin(self, name: str) -> bool:
        return name not in self.protos and name in BUILTINS

    def parent(self, name: str) -> Optional[str]:
        if name in self.protos:
            return self.protos[name].extends or ROOT
        if name in BUILTINS:
            return BUILTINS[name].extends
        return None

    def ancestry(self, name: str) -> list[str]:
        """``name`` followed by its supertypes up to the root."""
        chain = []
        cur = name
        while cur is not None and cur not in chain and self.is_known(cur):
            chain.append(cur)
            cur = self.parent(cur)
        return chain

    def is_subprototype(self, name: str, ancestor: str) -> bool:
        return ancestor in self.ancestry(base_type(name))

    def subprototypes(self, name: str) -> list[str]:
        """Strict sub-prototypes of ``name``, sorted."""
        return sorted(p for p in self.all_names() if p != name and self.is_subprototype(p, name))

    def all_names(self) -> list[str]:
        return sorted(set(self.protos) | set(BUILTINS))

    # -- members -------------------------------------------------------------

    def own_method(self, name: str, selector: str):
        if name in self.protos:
            m = self.protos[name].method(selector)
            if m is not None:
                return m
        if name in BUILTINS and name not in self.protos:
            return BUILTINS[name].methods.get(selector)
        return None

    def lookup(self, name: str, selector: str):
        """Find the method that handles ``selector`` for instances of ``name``.

        Returns ``(defining prototype, method)`` or None. Constructors are not
        inherited.
        """
        name = base_type(name)
        if selector in CONSTRUCTOR_SELECTORS or selector in INIT_SELECTORS:
            m = self.own_method(name, selector)
            return (name, m) if m is not None else None
        for owner in self.ancestry(name):
            m = self.own_method(owner, selector)
            if m is not None:
                return owner, m
        return None

    def has_default_new(self, name: str) -> bool:
        """Prototypes with no ``init`` method at all may still be sent ``new``."""
        if name in self.protos:
            proto = self.protos[name]
            return not any(m.selector.text in INIT_SELECTORS for m in proto.methods)
        return name in BUILTINS and BUILTINS[name].instantiable

    def implementors(self, selector: str) -> list[str]:
        return [n for n in self.all_names() if self.own_method(n, selector) is not None]

    def all_fields(self, name: str) -> list:
        out = []
        for owner in reversed(self.ancestry(name)):
            if owner in self.protos:
                out.extend(self.protos[owner].fields)
        return out

    def field_decl(self, name: str, field_name: str):
        for owner in self.ancestry(name):
            if owner in self.protos:
                f = self.protos[owner].field_named(field_name)
                if f is not None:
                    return f
        return None

    def field_type(self, name: str, field_name: str) -> Optional[str]:
        f = self.field_decl(name, field_name)
        return f.type_name if f else None

    def type_exists(self, type_name: str) -> bool:
        if not self.is_known(base_type(type_name)):
            return False
        return all(self.type_exists(a) for a in type_arguments(type_name))

    # -- scopes and static types ----------------------------------------------

    def scope(self, proto: str, method: MethodDecl, upto: Optional[int] = None) -> "Scope":
        """Scope inside ``method`` just before statement ``upto`` (default: end)."""
        sc = Scope(self, proto, method)
        for p in method.params:
            sc.locals[p.name] = TypeRef(p.type_name)
        for stmt in method.body[:upto]:
            sc.declare(stmt)
        return sc


class Scope:
    """Local variables visible at a point in a method, with static typing."""

    def __init__(self, program: Program, proto: str, method: Optional[MethodDecl]):
        self.program = program
        self.proto = proto
        self.method = method
        self.locals: dict[str, Optional[TypeRef]] = {}
        self.read_only: set[str] = set()

    def declare(self, stmt):
        if isinstance(stmt, VarDecl):
            if stmt.type_name:
                t = TypeRef(stmt.type_name)
            elif stmt.init is not None:
                t = self.type_of(stmt.init)
                if t is not None and t.meta:
                    t = None
            else:
                t = None
            self.locals[stmt.name] = t
            if stmt.mutability == "let":
                self.read_only.add(stmt.name)

    def classify(self, name: str) -> str:
        """Resolution order for a bare identifier: local, field, method, prototype."""
        if name in self.locals:
            return "local"
        if self.program.field_decl(self.proto, name) is not None:
            return "field"
        if self.program.lookup(self.proto, name) is not None:
            return "method"
        if self.program.is_known(name):
            return "prototype"
        return "unknown"

    def type_of(self, expr) -> Optional[TypeRef]:
        prog = self.program
        if isinstance(expr, StringLit) or isinstance(expr, Concat):
            return STRING
        if isinstance(expr, IntLit):
            return INT
        if isinstance(expr, SelfRef):
            return TypeRef(self.proto)
        if isinstance(expr, FieldRef):
            t = prog.field_type(self.proto, expr.name)
            return TypeRef(t) if t else None
        if isinstance(expr, Identifier):
            kind = self.classify(expr.name)
            if kind == "local":
                return self.locals[expr.name]
            if kind == "field":
                return TypeRef(prog.field_type(self.proto, expr.name))
            if kind == "method":
                _, m = prog.lookup(self.proto, expr.name)
                return TypeRef(m.return_type) if m.return_type else None
            if kind == "prototype":
                return TypeRef(expr.name, meta=True)
            return None
        if isinstance(expr, Index):
            t = self.type_of(expr.target)
            if t is not None and t.base == "Array":
                args = type_arguments(t.name)
                return TypeRef(args[0]) if args else None
            return None
        if isinstance(expr, MessageSend):
            rt = self.type_of(expr.receiver)
            if rt is None:
                return None
            sel = expr.selector.text
            if rt.meta and (sel in CONSTRUCTOR_SELECTORS or sel == "cast:"):
                return TypeRef(rt.name)
            found = prog.lookup(rt.name, sel)
            if found is None:
                return None
            _, m = found
            return TypeRef(m.return_type) if m.return_type else None
        return None


def method_group_sizes(m) -> tuple:
    if isinstance(m, BuiltinMethod):
        return m.group_sizes
    return tuple(len(g) for g in m.param_groups)


# -- checking ----------------------------------------------------------------

class _Checker:
    def __init__(self, program: Program, metaobject_index, strict: bool):
        self.program = program
        self.index = metaobject_index or {}
        self.strict = strict
        self.diags: list[Diagnostic] = []

    def err(self, message, pos=None):
        self.diags.append(error(message, pos))

    def run(self):
        seen = {}
        for unit in self.program.units:
            for proto in unit.prototypes:
                if proto.name in seen or proto.name in BUILTINS:
                    self.err(f"duplicate prototype {proto.name}", proto.pos)
                seen[proto.name] = proto
        for unit in self.program.units:
            visible = self.visible_metaobjects(unit)
            for proto in unit.prototypes:
                self.check_prototype(unit, proto, visible)

    def visible_metaobjects(self, unit) -> set[str]:
        names = set(self.index.get(AUTO_IMPORTED, ()))
        for imp in unit.imports:
            names |= set(self.index.get(imp, ()))
        return names

    def check_annotations(self, annots, visible):
        for a in annots:
            if a.name not in visible:
                self.err(f"no metaobject named '{a.name}' is visible here "
                         f"(is its package imported?)", a.pos)

    def check_type(self, type_name, pos, what):
        if type_name and not self.program.type_exists(type_name):
            self.err(f"unknown type '{type_name}' in {what}", pos)

    def check_prototype(self, unit, proto: PrototypeDecl, visible):
        prog = self.program
        self.check_annotations(proto.annotations, visible)
        if proto.extends is not None:
            if not prog.is_known(proto.extends):
                self.err(f"unknown supertype '{proto.extends}' of {proto.name}", proto.pos)
            elif proto.name in prog.ancestry(proto.extends):
                self.err(f"cyclic inheritance involving {proto.name}", proto.pos)
        selectors = set()
        for m in proto.methods:
            if m.selector.text in selectors:
                self.err(f"duplicate method '{m.selector.text}' in {proto.name}", m.pos)
            selectors.add(m.selector.text)
        fields = set()
        inherited = {f.name for f in prog.all_fields(proto.extends)} if proto.extends else set()
        for f in proto.fields:
            self.check_annotations(f.annotations, visible)
            if f.name in fields or f.name in inherited:
                self.err(f"duplicate field '{f.name}' in {proto.name}", f.pos)
            fields.add(f.name)
            self.check_type(f.type_name, f.pos, f"field {proto.name}.{f.name}")
        for m in proto.methods:
            self.check_annotations(m.annotations, visible)
            for p in m.params:
                self.check_type(p.type_name, m.pos, f"parameter '{p.name}' of {proto.name}.{m.selector}")
            self.check_type(m.return_type, m.pos, f"return type of {proto.name}.{m.selector}")
            if not m.synthetic:
                self.check_body(proto, m, visible)

    def check_body(self, proto, method, visible):
        for stmt in method.body:
            if isinstance(stmt, VarDecl):
                self.check_annotations(stmt.annotations, visible)
                self.check_type(stmt.type_name, stmt.pos, f"variable '{stmt.name}'")
        if self.strict:
            self.check_statements(proto, method)

    def check_statements(self, proto, method):
        scope = Scope(self.program, proto.name, method)
        for p in method.params:
            scope.locals[p.name] = TypeRef(p.type_name)
        in_init = method.selector.text in INIT_SELECTORS
        for stmt in method.body:
            if isinstance(stmt, VarDecl):
                if stmt.init is not None:
                    self.check_expr(stmt.init, scope)
                if stmt.mutability == "let" and stmt.init is None:
                    self.err(f"read-only variable '{stmt.name}' must be initialized", stmt.pos)
            elif isinstance(stmt, Assign):
                self.check_expr(stmt.value, scope)
                self.check_assign_target(stmt.target, scope, in_init)
            elif isinstance(stmt, Return):
                if stmt.value is not None:
                    self.check_expr(stmt.value, scope)
            elif isinstance(stmt, ExprStmt):
                self.check_expr(stmt.expr, scope)
            scope.declare(stmt)

    def check_assign_target(self, target, scope: Scope, in_init: bool):
        prog = self.program
        if isinstance(target, Identifier):
            kind = scope.classify(target.name)
            if kind == "local":
                if target.name in scope.read_only:
                    self.err(f"cannot assign to read-only variable '{target.name}'", target.pos)
                return
            if kind != "field":
                self.err(f"unknown variable '{target.name}'", target.pos)
                return
            name = target.name
        else:
            name = target.name
            if prog.field_decl(scope.proto, name) is None:
                self.err(f"{scope.proto} has no field '{name}'", target.pos)
                return
        if prog.field_decl(scope.proto, name).read_only and not in_init:
            self.err(f"cannot assign to read-only field '{name}' outside a constructor", target.pos)

    def check_expr(self, expr, scope: Scope):
        prog = self.program
        if isinstance(expr, Identifier):
            if scope.classify(expr.name) == "unknown":
                self.err(f"unknown identifier '{expr.name}'", expr.pos)
            return
        if isinstance(expr, FieldRef):
            if prog.field_decl(scope.proto, expr.name) is None:
                self.err(f"{scope.proto} has no field '{expr.name}'", expr.pos)
            return
        if isinstance(expr, Concat):
            self.check_expr(expr.left, scope)
            self.check_expr(expr.right, scope)
            return
        if isinstance(expr, Index):
            self.check_expr(expr.target, scope)
            self.check_expr(expr.index, scope)
            return
        if not isinstance(expr, MessageSend):
            return
        self.check_expr(expr.receiver, scope)
        for a in expr.args:
            self.check_expr(a, scope)
        sel = expr.selector.text
        rt = scope.type_of(expr.receiver)
        if sel in CONSTRUCTOR_SELECTORS:
            if rt is None or not rt.meta:
                self.err(f"'{sel}' can only be sent to a prototype", expr.pos)
                return
            if prog.lookup(rt.name, sel) is None and not (sel == "new" and prog.has_default_new(rt.name)):
                self.err(f"{rt.name} has no constructor matching '{sel}'", expr.pos)
            else:
                self.check_arity(expr, rt.name)
            return
        if sel in INIT_SELECTORS:
            self.err(f"constructor '{sel}' cannot be called directly", expr.pos)
            return
        if rt is None:
            return
        if rt.meta and sel == "cast:":
            return
        if prog.lookup(rt.name, sel) is None:
            self.err(f"{rt.name} does not understand '{sel}'", expr.pos)
            return
        self.check_arity(expr, rt.name)

    def check_arity(self, expr: MessageSend, proto: str):
        found = self.program.lookup(proto, expr.selector.text)
        if found is None:
            return
        want = method_group_sizes(found[1])
        got = tuple(len(g) for g in expr.arg_groups)
        if want != got:
            self.err(f"'{expr.selector.text}' sent to {proto} with {sum(got)} argument(s), "
                     f"expected {sum(want)}", expr.pos)


def check_program(program: Program, metaobject_index=None, strict: bool = True) -> list[Diagnostic]:
    c = _Checker(program, metaobject_index, strict)
    c.run()
    return c.diags


def resolve(units: Iterable[SourceUnit], metaobject_index=None, strict: bool = True) -> Program:
    """Bind names across ``units``; raise :class:`CompileError` on any error.

    ``metaobject_index`` maps package names to the metaobject names importing
    that package makes visible. With ``strict=False`` only declarations are
    checked; method bodies may still mention members that metaobjects have
    yet to generate.
    """
    program = Program(list(units))
    diags = check_program(program, metaobject_index, strict)
    if diags:
        raise CompileError(diags)
    return program
