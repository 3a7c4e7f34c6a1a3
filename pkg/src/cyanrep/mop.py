"""Compile-time metaobject protocol.

Two phases are modelled:

* **ATI** runs once field types are known. Each annotation's metaobject may
  return :class:`SourceEdit` values carrying *source text*; nothing is applied
  while edits are being collected.
* **DSA2** runs on the expanded, frozen program. Metaobjects may only report
  diagnostics.

Metaobjects see the program through :class:`CompilerView`, which exposes
queries but no mutators. All mutation flows through :func:`apply_edits`.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional

from .constructors import synthesize_prototype
from .errors import CompileError, Diagnostic, ExpansionError, error
from .nodes import (
    Annotation, MethodDecl, PrototypeDecl, Selector, SourceUnit, VarDecl, member_key,
)
from .parser import parse_method, parse_source, parse_statements
from .resolver import AUTO_IMPORTED, Program, Scope, resolve


class DeclKind(str, Enum):
    METHOD_DEC = "METHOD_DEC"
    VAR_DEC = "VAR_DEC"
    PROTOTYPE_DEC = "PROTOTYPE_DEC"


@dataclass(frozen=True)
class MetaobjectDef:
    name: str
    package: str
    attachable_to: frozenset
    edit_hook: Callable
    check_hook: Optional[Callable] = None

    def __post_init__(self):
        if not self.attachable_to:
            raise ValueError(f"metaobject {self.name} must be attachable somewhere")


# -- source edits ------------------------------------------------------------

@dataclass(frozen=True)
class AddMethod:
    target: str
    text: str
    before: Optional[tuple] = None  # member key the new method is inserted before
    origin: str = ""


@dataclass(frozen=True)
class RenameMethod:
    target: str
    old: str
    new: str
    origin: str = ""


@dataclass(frozen=True)
class AddPrototype:
    package: str
    text: str
    origin: str = ""


@dataclass(frozen=True)
class ReplaceVarDecl:
    target: str     # prototype
    method: str     # selector of the enclosing method
    index: int      # statement index in the method body
    text: str       # replacement statements
    origin: str = ""


SourceEdit = (AddMethod, RenameMethod, AddPrototype, ReplaceVarDecl)


# -- binding -----------------------------------------------------------------

@dataclass
class Site:
    kind: DeclKind
    unit: SourceUnit
    proto: PrototypeDecl
    decl: object
    method: Optional[MethodDecl] = None
    stmt_index: Optional[int] = None
    anchor: Optional[tuple] = None  # member key following a member-position annotation


@dataclass
class Binding:
    annotation: Annotation
    definition: MetaobjectDef
    site: Site

    @property
    def label(self) -> str:
        return f"@{self.annotation.name}"


def check_attachment(annotation: Annotation, kind: DeclKind, definition: MetaobjectDef) -> Optional[Diagnostic]:
    """None when ``definition`` may be attached to a declaration of ``kind``."""
    if kind in definition.attachable_to:
        return None
    allowed = ", ".join(sorted(k.value for k in definition.attachable_to))
    return error(f"metaobject '{annotation.name}' cannot be attached to {kind.value}; "
                 f"allowed: {allowed}", annotation.pos)


def metaobject_index(metaobjects) -> dict:
    index: dict = {}
    for d in metaobjects:
        index.setdefault(d.package, set()).add(d.name)
    return index


def _visible(unit: SourceUnit, metaobjects) -> dict:
    packages = {AUTO_IMPORTED, *unit.imports}
    return {d.name: d for d in metaobjects if d.package in packages}


def _candidates(unit, proto):
    """Yield (annotation, [candidate sites]) in source order."""
    for a in proto.annotations:
        yield a, [Site(DeclKind.PROTOTYPE_DEC, unit, proto, proto)]
    members = proto.members
    for i, member in enumerate(members):
        if isinstance(member, MethodDecl) and member.synthetic:
            continue
        kind = DeclKind.METHOD_DEC if isinstance(member, MethodDecl) else DeclKind.VAR_DEC
        for a in member.annotations:
            yield a, [
                Site(kind, unit, proto, member),
                # member-position form of a prototype-level metaobject (e.g. @init)
                Site(DeclKind.PROTOTYPE_DEC, unit, proto, proto, anchor=member_key(member)),
            ]
        if isinstance(member, MethodDecl):
            for j, stmt in enumerate(member.body):
                if isinstance(stmt, VarDecl):
                    for a in stmt.annotations:
                        yield a, [Site(DeclKind.VAR_DEC, unit, proto, stmt, method=member, stmt_index=j)]


def bind_annotations(program: Program, metaobjects) -> list[Binding]:
    """Bind every annotation to one metaobject and one declaration."""
    bindings, diags = [], []
    for unit in program.units:
        visible = _visible(unit, metaobjects)
        for proto in unit.prototypes:
            for a, sites in _candidates(unit, proto):
                d = visible.get(a.name)
                if d is None:
                    diags.append(error(f"no metaobject named '{a.name}' is visible here "
                                       f"(is its package imported?)", a.pos))
                    continue
                chosen = next((s for s in sites if s.kind in d.attachable_to), None)
                if chosen is None:
                    diags.append(check_attachment(a, sites[0].kind, d))
                    continue
                bindings.append(Binding(a, d, chosen))
    if diags:
        raise CompileError(diags)
    return bindings


# -- compiler view -----------------------------------------------------------

class CompilerView:
    """Read-only window onto the compiler handed to metaobject hooks."""

    def __init__(self, program: Program, binding: Binding, extras: Optional[dict] = None):
        self._program = program
        self._binding = binding
        self._diags: list[Diagnostic] = []
        self._extras = extras or {}

    @property
    def annotation(self) -> Annotation:
        return self._binding.annotation

    @property
    def site(self) -> Site:
        return self._binding.site

    @property
    def declaration(self):
        return self._binding.site.decl

    @property
    def prototype_name(self) -> str:
        return self._binding.site.proto.name

    @property
    def package(self) -> str:
        return self._binding.site.unit.package

    def lookup_prototype(self, name: str):
        return self._program.protos.get(name)

    def is_known_type(self, name: str) -> bool:
        return self._program.type_exists(name)

    def field_type(self, proto: str, name: str) -> Optional[str]:
        return self._program.field_type(proto, name)

    def is_subprototype(self, name: str, ancestor: str) -> bool:
        return self._program.is_subprototype(name, ancestor)

    def scope(self) -> Scope:
        """Scope at the annotated declaration (before it, for statements)."""
        site = self.site
        if site.method is not None:
            return self._program.scope(site.proto.name, site.method, upto=site.stmt_index)
        return Scope(self._program, site.proto.name, None)

    def method_names(self) -> set[str]:
        """All local and parameter names of the enclosing method."""
        m = self.site.method
        if m is None:
            return set()
        names = {p.name for p in m.params}
        names |= {s.name for s in m.body if isinstance(s, VarDecl)}
        return names

    def lookup_method(self, proto: str, selector: str):
        return self._program.lookup(proto, selector)

    def extra(self, key: str):
        return self._extras.get(key)

    @property
    def program(self) -> Program:
        """The frozen program; only offered during the check phase."""
        if not self._extras.get("frozen"):
            raise PermissionError("the program tree is only exposed after expansion")
        return self._program

    def error(self, message: str, path: tuple = ()):
        self._diags.append(error(message, self.annotation.pos, path))

    @property
    def diagnostics(self) -> list[Diagnostic]:
        return list(self._diags)


# -- phases ------------------------------------------------------------------

def run_phase_ati(program: Program, metaobjects, bindings=None) -> list:
    """Collect source edits from every annotation, in source order."""
    if bindings is None:
        bindings = bind_annotations(program, metaobjects)
    edits, diags = [], []
    for b in bindings:
        view = CompilerView(program, b)
        produced = b.definition.edit_hook(view) or []
        diags.extend(view.diagnostics)
        for e in produced:
            if not isinstance(e, SourceEdit):
                raise TypeError(f"{b.label} returned a non-edit {e!r}")
        edits.extend(produced)
    if diags:
        raise CompileError(diags)
    return edits


def _fail(origin: str, message: str):
    raise ExpansionError([error(f"{message} (edit from metaobject {origin or '?'})")])


def _reject_annotations(origin: str, nodes):
    for node in nodes:
        annots = list(getattr(node, "annotations", []))
        if isinstance(node, PrototypeDecl):
            for m in node.members:
                annots += m.annotations
                if isinstance(m, MethodDecl):
                    annots += [a for s in m.body for a in getattr(s, "annotations", [])]
        if isinstance(node, MethodDecl):
            annots += [a for s in node.body for a in getattr(s, "annotations", [])]
        if annots:
            _fail(origin, f"generated code carries annotation @{annots[0].name}; "
                          f"expansion is single-round")


def _strip_annotations(units):
    for unit in units:
        for proto in unit.prototypes:
            proto.annotations = []
            for m in proto.members:
                m.annotations = []
                if isinstance(m, MethodDecl):
                    for s in m.body:
                        if isinstance(s, VarDecl):
                            s.annotations = []


class ExpandedProgram(Program):
    """Program after ATI edits; ``expansions`` records what each metaobject did."""

    def __init__(self, units, expansions=()):
        super().__init__(units)
        self.expansions = list(expansions)


def apply_edits(program: Program, edits, metaobjects=()) -> ExpandedProgram:
    """Parse edit texts and merge them into a copy of ``program``.

    The input program is left untouched. Consumed annotations are removed
    from the copy and recorded in ``expansions``.
    """
    units = copy.deepcopy(program.units)
    protos = {p.name: p for u in units for p in u.prototypes}

    def proto_for(edit) -> PrototypeDecl:
        p = protos.get(edit.target)
        if p is None:
            _fail(edit.origin, f"edit targets unknown prototype {edit.target}")
        return p

    replacements, renames, additions, new_units = [], [], [], []
    for e in edits:
        if isinstance(e, ReplaceVarDecl):
            m = proto_for(e).method(e.method)
            if m is None or not (0 <= e.index < len(m.body)) or not isinstance(m.body[e.index], VarDecl):
                _fail(e.origin, f"no variable declaration at {e.target}.{e.method}[{e.index}]")
            try:
                stmts = parse_statements(e.text, origin=f"<{e.origin}>")
            except CompileError as exc:
                _fail(e.origin, f"generated statements do not parse: {exc}")
            _reject_annotations(e.origin, stmts)
            replacements.append((m, m.body[e.index], stmts))
        elif isinstance(e, RenameMethod):
            m = proto_for(e).method(e.old)
            if m is None:
                _fail(e.origin, f"cannot rename missing method {e.target}.{e.old}")
            renames.append((m, e))
        elif isinstance(e, AddMethod):
            p = proto_for(e)
            try:
                new = parse_method(e.text, origin=f"<{e.origin}>")
            except CompileError as exc:
                _fail(e.origin, f"generated method does not parse: {exc}")
            _reject_annotations(e.origin, [new])
            anchor = None
            if e.before is not None:
                anchor = next((x for x in p.members if member_key(x) == e.before), None)
            additions.append((p, new, anchor, e))
        elif isinstance(e, AddPrototype):
            try:
                unit = parse_source(e.text, origin=f"<{e.origin}>")
            except CompileError as exc:
                _fail(e.origin, f"generated prototype does not parse: {exc}")
            _reject_annotations(e.origin, unit.prototypes)
            unit.package = e.package
            unit.origin = "generated"
            new_units.append((unit, e))
        else:
            raise TypeError(f"unknown edit {e!r}")

    for m, old, stmts in replacements:
        i = next(k for k, s in enumerate(m.body) if s is old)
        m.body[i:i + 1] = stmts
    for m, e in renames:
        new_sel = Selector.parse(e.new)
        if new_sel.arity_groups != m.selector.arity_groups:
            _fail(e.origin, f"rename {e.old} -> {e.new} changes the number of keywords")
        m.selector = new_sel
    for p, new, anchor, e in additions:
        if p.method(new.selector.text) is not None:
            _fail(e.origin, f"{p.name} already has a method '{new.selector.text}'")
        if anchor is None:
            p.members.append(new)
        else:
            i = next(k for k, x in enumerate(p.members) if x is anchor)
            p.members.insert(i, new)
    for p in protos.values():
        seen = set()
        for m in p.methods:
            if m.selector.text in seen:
                _fail("", f"conflicting edits: {p.name} ends up with two methods '{m.selector.text}'")
            seen.add(m.selector.text)
    for unit, e in new_units:
        for p in unit.prototypes:
            if p.name in protos:
                _fail(e.origin, f"prototype {p.name} already exists")
            protos[p.name] = p
        units.append(unit)

    expansions = []
    for u in program.units:
        for p in u.prototypes:
            for a, _ in _candidates(u, p):
                expansions.append((u.origin, p.name, a.name))
    _strip_annotations(units)
    for unit in units:
        for p in unit.prototypes:
            synthesize_prototype(p)
    try:
        resolved = resolve(units, metaobject_index(metaobjects))
    except CompileError as exc:
        raise ExpansionError(exc.diagnostics) from None
    return ExpandedProgram(resolved.units, expansions)


def run_phase_dsa2(expanded: Program, bindings, extras: Optional[dict] = None) -> list[Diagnostic]:
    """Run every check hook against the frozen program."""
    extras = dict(extras or {})
    extras["frozen"] = True
    extras.setdefault("bindings", bindings)
    diags = []
    for b in bindings:
        hook = b.definition.check_hook
        if hook is None:
            continue
        view = CompilerView(expanded, b, extras)
        result = hook(view)
        if result:
            raise TypeError(f"check hook of {b.label} returned edits; the program is frozen")
        diags.extend(view.diagnostics)
    return diags
