"""Canonical source formatting.

Prototypes always print with ``end``; statements always end in ``;``.
Compiler-synthesized constructors are skipped so printed output can be fed
back through the compiler without colliding with its own synthesis.
"""

from __future__ import annotations

import json

from .nodes import (
    Annotation, Assign, Concat, ExprStmt, FieldDecl, FieldRef, Identifier, Index,
    IntLit, MessageSend, MethodDecl, PrototypeDecl, Return, SelectorKind, SelfRef,
    SourceUnit, StringLit, VarDecl,
)

INDENT = "    "

# precedence levels: higher binds tighter
_KEYWORD, _BINARY, _UNARY, _PRIMARY = 1, 2, 3, 4


def _level(expr) -> int:
    if isinstance(expr, MessageSend):
        return {SelectorKind.KEYWORD: _KEYWORD, SelectorKind.BINARY: _BINARY,
                SelectorKind.UNARY: _UNARY}[expr.selector.kind]
    if isinstance(expr, Concat):
        return _BINARY
    if isinstance(expr, IntLit) and expr.value < 0:
        return _UNARY
    return _PRIMARY


def _wrap(expr, minimum: int) -> str:
    text = format_expr(expr)
    return f"({text})" if _level(expr) < minimum else text


def format_string(value: str) -> str:
    out = json.dumps(value, ensure_ascii=False)
    return out


def format_expr(expr) -> str:
    if isinstance(expr, Identifier):
        return expr.name
    if isinstance(expr, SelfRef):
        return "self"
    if isinstance(expr, FieldRef):
        return f"self.{expr.name}"
    if isinstance(expr, StringLit):
        return format_string(expr.value)
    if isinstance(expr, IntLit):
        return str(expr.value)
    if isinstance(expr, Index):
        return f"{_wrap(expr.target, _PRIMARY)}[{format_expr(expr.index)}]"
    if isinstance(expr, Concat):
        return f"{_wrap(expr.left, _BINARY)} ++ {_wrap(expr.right, _UNARY)}"
    if isinstance(expr, MessageSend):
        kind = expr.selector.kind
        if kind is SelectorKind.UNARY:
            return f"{_wrap(expr.receiver, _UNARY)} {expr.selector.text}"
        if kind is SelectorKind.BINARY:
            return (f"{_wrap(expr.receiver, _BINARY)} {expr.selector.text} "
                    f"{_wrap(expr.arg_groups[0][0], _UNARY)}")
        parts = [_wrap(expr.receiver, _BINARY)]
        for kw, group in zip(expr.selector.keywords, expr.arg_groups):
            parts.append(f"{kw} {', '.join(_wrap(a, _BINARY) for a in group)}")
        return " ".join(parts)
    raise TypeError(f"not an expression: {expr!r}")


def format_annotation(a: Annotation) -> str:
    if not a.args:
        return f"@{a.name}"
    return f"@{a.name}({', '.join(format_expr(x) for x in a.args)})"


def format_stmt(stmt) -> str:
    if isinstance(stmt, VarDecl):
        head = stmt.mutability
        if stmt.type_name:
            head += f" {stmt.type_name}"
        head += f" {stmt.name}"
        if stmt.init is not None:
            head += f" = {format_expr(stmt.init)}"
        return head + ";"
    if isinstance(stmt, Assign):
        return f"{format_expr(stmt.target)} = {format_expr(stmt.value)};"
    if isinstance(stmt, Return):
        if stmt.value is None:
            return "return;"
        return f"return {format_expr(stmt.value)};"
    if isinstance(stmt, ExprStmt):
        return format_expr(stmt.expr) + ";"
    raise TypeError(f"not a statement: {stmt!r}")


def format_statements(stmts, indent: str = "") -> list[str]:
    lines = []
    for s in stmts:
        for a in getattr(s, "annotations", []):
            lines.append(indent + format_annotation(a))
        lines.append(indent + format_stmt(s))
    return lines


def method_header(m: MethodDecl) -> str:
    if m.selector.kind is SelectorKind.KEYWORD:
        parts = []
        for kw, group in zip(m.selector.keywords, m.param_groups):
            params = ", ".join(f"{p.type_name} {p.name}" for p in group)
            parts.append(f"{kw} {params}" if params else kw)
        head = " ".join(parts)
    else:
        head = m.selector.text
    if m.return_type:
        head += f" -> {m.return_type}"
    return head


def format_method(m: MethodDecl, indent: str = "") -> list[str]:
    lines = [indent + format_annotation(a) for a in m.annotations]
    prefix = "override func " if m.override else "func "
    head = indent + prefix + method_header(m)
    if not m.body:
        lines.append(head + " { }")
        return lines
    lines.append(head + " {")
    lines.extend(format_statements(m.body, indent + INDENT))
    lines.append(indent + "}")
    return lines


def format_field(f: FieldDecl, indent: str = "") -> list[str]:
    lines = [indent + format_annotation(a) for a in f.annotations]
    head = f"{f.mutability} " if f.mutability else ""
    lines.append(f"{indent}{head}{f.type_name} {f.name}")
    return lines


def format_prototype(p: PrototypeDecl) -> str:
    lines = [format_annotation(a) for a in p.annotations]
    head = f"object {p.name}"
    if p.extends:
        head += f" extends {p.extends}"
    lines.append(head)
    prev = None
    for member in p.members:
        if isinstance(member, MethodDecl) and member.synthetic:
            continue
        if isinstance(member, MethodDecl) and prev is not None:
            lines.append("")
        if isinstance(member, MethodDecl):
            lines.extend(format_method(member, INDENT))
        else:
            if isinstance(prev, MethodDecl):
                lines.append("")
            lines.extend(format_field(member, INDENT))
        prev = member
    lines.append("end")
    return "\n".join(lines) + "\n"


def format_unit(unit: SourceUnit) -> str:
    lines = [f"package {unit.package}"]
    lines.extend(f"import {name}" for name in unit.imports)
    out = "\n".join(lines) + "\n"
    for p in unit.prototypes:
        out += "\n" + format_prototype(p)
    return out


def pretty_print(node) -> str:
    """Format any AST node as canonical source text."""
    if isinstance(node, SourceUnit):
        return format_unit(node)
    if isinstance(node, PrototypeDecl):
        return format_prototype(node)
    if isinstance(node, MethodDecl):
        return "\n".join(format_method(node)) + "\n"
    if isinstance(node, FieldDecl):
        return "\n".join(format_field(node)) + "\n"
    if isinstance(node, (VarDecl, Assign, Return, ExprStmt)):
        return "\n".join(format_statements([node]))
    return format_expr(node)
