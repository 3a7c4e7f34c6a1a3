"""Built-in metaobjects: ``init``, ``treplicaAction`` and ``treplicaInit``.

Each hook receives a :class:`~cyanrep.mop.CompilerView` and answers with
source edits in text form. ``init`` lives in the auto-imported ``cyan.lang``
package; the other two require ``import treplica``.
"""

from __future__ import annotations

from dataclasses import dataclass

from .builtins import SERIALIZABLE_TYPES
from .determinism import build_call_graph, check_action_method, reachable
from .mop import (
    AddMethod, AddPrototype, DeclKind, MetaobjectDef, RenameMethod, ReplaceVarDecl,
)
from .nodes import FieldDecl, Identifier, IntLit, MethodDecl, SelectorKind, VarDecl
from .printer import INDENT, format_expr, format_stmt
from .resolver import STRING

ACTION_SUFFIX = "TreplicaAction"
FIELD_SUFFIX = "Var"


@dataclass(frozen=True)
class ActionNaming:
    owner: str
    selector: str

    @property
    def _bases(self) -> list[str]:
        return [k.rstrip(":") for k in self.selector.split(":") if k] or [self.selector]

    @property
    def action_name(self) -> str:
        """``Info`` + ``name:address:`` -> ``InfonameAddress``."""
        first, *rest = self._bases
        return self.owner + first + "".join(r[:1].upper() + r[1:] for r in rest)

    @property
    def renamed_selector(self) -> str:
        """``setText:`` -> ``setTextTreplicaAction:``; only the first keyword changes."""
        if not self.selector.endswith(":"):
            return self.selector + ACTION_SUFFIX
        first, rest = self.selector.split(":", 1)
        return f"{first}{ACTION_SUFFIX}:{rest}"


def fresh_name(base: str, taken) -> str:
    if base not in taken:
        return base
    n = 1
    while f"{base}{n}" in taken:
        n += 1
    return f"{base}{n}"


def _keyword_header(selector: str, groups, render) -> str:
    """Rebuild a method header or send from keyword parts and per-part items."""
    if not selector.endswith(":"):
        return selector
    keywords = [k + ":" for k in selector.split(":")[:-1]]
    return " ".join(f"{kw} {', '.join(render(x) for x in g)}".rstrip() for kw, g in zip(keywords, groups))


# -- @init -------------------------------------------------------------------

def expand_init(view) -> list:
    proto = view.prototype_name
    params = []
    for arg in view.annotation.args:
        if not isinstance(arg, Identifier):
            view.error(f"@init arguments must be field names, got '{format_expr(arg)}'")
            continue
        t = view.field_type(proto, arg.name)
        if t is None:
            view.error(f"@init: {proto} has no field '{arg.name}'")
            continue
        params.append((t, arg.name))
    if len(params) != len(view.annotation.args):
        return []
    if not params:
        text = "func init { }"
    else:
        header = ", ".join(f"{t} {n}" for t, n in params)
        body = "".join(f"{INDENT}self.{n} = {n};\n" for _, n in params)
        text = f"func init: {header} {{\n{body}}}"
    return [AddMethod(proto, text, before=view.site.anchor, origin="init")]


# -- @treplicaAction ---------------------------------------------------------

def expand_treplica_action(view) -> list:
    owner = view.prototype_name
    method: MethodDecl = view.declaration
    sel = method.selector.text
    ok = True
    if not view.is_subprototype(owner, "Context"):
        view.error(f"@treplicaAction: {owner} is not a sub-prototype of Context")
        ok = False
    if method.return_type is not None:
        view.error(f"@treplicaAction: {owner}.{sel} returns a value; "
                   f"replicated methods cannot return local results")
        ok = False
    if sel in ("init", "init:") or method.selector.kind is SelectorKind.BINARY:
        view.error(f"@treplicaAction cannot be attached to {sel}")
        ok = False
    for p in method.params:
        if p.type_name not in SERIALIZABLE_TYPES:
            view.error(f"@treplicaAction: parameter '{p.name}' of {owner}.{sel} has "
                       f"non-serializable type {p.type_name}")
            ok = False
    naming = ActionNaming(owner, sel)
    if view.lookup_prototype(naming.action_name) is not None:
        view.error(f"@treplicaAction: generated prototype name {naming.action_name} "
                   f"collides with an existing prototype")
        ok = False
    if not ok:
        return []

    params = method.params
    names = [p.name for p in params]
    action_var = fresh_name("action", set(names))
    ctor = f"{naming.action_name} new: {', '.join(names)}" if names else f"{naming.action_name} new"
    header = _keyword_header(sel, method.param_groups, lambda p: f"{p.type_name} {p.name}")
    wrapper = (
        f"func {header} {{\n"
        f"{INDENT}var {action_var} = {ctor};\n"
        f"{INDENT}self getTreplica execute: {action_var};\n"
        f"}}"
    )

    fields = [(p.type_name, p.name + FIELD_SUFFIX) for p in params]
    lines = [f"object {naming.action_name} extends Action"]
    lines += [f"{INDENT}var {t} {f}" for t, f in fields]
    if params:
        lines.append(f"{INDENT}func init: {', '.join(f'{p.type_name} {p.name}' for p in params)} {{")
        lines += [f"{INDENT * 2}{f} = {p.name};" for (_, f), p in zip(fields, params)]
        lines.append(f"{INDENT}}}")
    else:
        lines.append(f"{INDENT}func init {{ }}")
    # stored fields go back out grouped exactly like the original parameters
    field_iter = iter(f for _, f in fields)
    groups = [[next(field_iter) for _ in g] for g in method.param_groups]
    call = _keyword_header(naming.renamed_selector, groups, str)
    lines += [
        f"{INDENT}override func executeOn: Context context {{",
        f"{INDENT * 2}var obj = {owner} cast: context;",
        f"{INDENT * 2}obj {call};",
        f"{INDENT}}}",
        "end",
    ]
    return [
        AddMethod(owner, wrapper, before=("method", sel), origin="treplicaAction"),
        RenameMethod(owner, sel, naming.renamed_selector, origin="treplicaAction"),
        AddPrototype(view.package, "\n".join(lines) + "\n", origin="treplicaAction"),
    ]


def check_treplica_action(view) -> list:
    """Reject action methods that can reach a non-deterministic call or another action."""
    program = view.program
    graph = view.extra("call_graph") or build_call_graph(program)
    registry = view.extra("registry")
    owner = view.prototype_name
    sel = view.declaration.selector.text
    naming = ActionNaming(owner, sel)
    entry = (owner, naming.renamed_selector)
    if registry is not None:
        for f in check_action_method(entry, graph, registry, program):
            view.error(f"non-deterministic call reachable from {owner}.{sel}: {f.render_path()}",
                       path=f.path)
    wrappers = {}
    for b in view.extra("bindings") or ():
        if b.definition.name == "treplicaAction":
            wrappers[(b.site.proto.name, b.site.decl.selector.text)] = b
    for node, path in reachable(entry, graph).items():
        if node in wrappers and node != (owner, sel):
            shown = " -> ".join(f"{p}.{s}" for p, s in path)
            view.error(f"replicated action {owner}.{sel} calls replicated action "
                       f"{node[0]}.{node[1]}, which would nest consensus rounds: {shown}", path=path)
    return []


# -- @treplicaInit -----------------------------------------------------------

def expand_treplica_init(view) -> list:
    decl = view.declaration
    site = view.site
    if isinstance(decl, FieldDecl) or not isinstance(decl, VarDecl) or site.method is None:
        view.error("@treplicaInit must be attached to a local variable declaration")
        return []
    args = view.annotation.args
    if len(args) != 3:
        view.error(f"@treplicaInit expects 3 arguments (numberProcess, rtt, path), got {len(args)}")
        return []
    n, rtt, path = args
    scope = view.scope()
    ok = True
    if not isinstance(n, IntLit) or n.value < 1:
        view.error("@treplicaInit: numberProcess must be a positive integer literal")
        ok = False
    if not isinstance(rtt, IntLit) or rtt.value < 0:
        view.error("@treplicaInit: rtt must be a non-negative integer literal")
        ok = False
    if isinstance(path, Identifier) and path.name not in scope.locals:
        if scope.classify(path.name) != "field":
            view.error(f"@treplicaInit: '{path.name}' is not in scope at the declaration")
            ok = False
    if ok and scope.type_of(path) != STRING:
        view.error("@treplicaInit: path must be an expression of type String")
        ok = False
    var_type = decl.type_name
    if var_type is None and decl.init is not None:
        t = scope.type_of(decl.init)
        var_type = t.name if t is not None and not t.meta else None
    if var_type is None or not view.is_subprototype(var_type, "Context"):
        view.error(f"@treplicaInit: variable '{decl.name}' must have a type that is a "
                   f"sub-prototype of Context (found {var_type or 'unknown'})")
        ok = False
    if not ok:
        return []
    taken = view.method_names()
    handle = fresh_name("treplica" + decl.name, taken)
    plain = VarDecl(decl.mutability, decl.type_name, decl.name, decl.init)
    text = "\n".join([
        format_stmt(plain),
        f"var {handle} = Treplica new;",
        f"{handle} runMachine: {decl.name} numberProcess: {n.value} rtt: {rtt.value} "
        f"path: {format_expr(path)};",
        f"{decl.name} setTreplica: {handle};",
    ])
    return [ReplaceVarDecl(view.prototype_name, site.method.selector.text, site.stmt_index,
                           text, origin="treplicaInit")]


INIT = MetaobjectDef("init", "cyan.lang", frozenset({DeclKind.PROTOTYPE_DEC}), expand_init)
TREPLICA_ACTION = MetaobjectDef("treplicaAction", "treplica", frozenset({DeclKind.METHOD_DEC}),
                                expand_treplica_action, check_treplica_action)
TREPLICA_INIT = MetaobjectDef("treplicaInit", "treplica", frozenset({DeclKind.VAR_DEC}),
                              expand_treplica_init)

DEFAULT_METAOBJECTS = (INIT, TREPLICA_ACTION, TREPLICA_INIT)
