"""AST for the mini-language.

Nodes are plain dataclasses. Structural equality ignores source positions,
so a tree compares equal to the tree obtained by printing and re-parsing it.
Keyword messages keep their arguments grouped per keyword because a single
keyword may take several comma-separated arguments (``new: "Meg", 2``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Union

from .errors import NOWHERE, Position


def _pos():
    return field(default=NOWHERE, compare=False, repr=False)


class SelectorKind(str, Enum):
    UNARY = "unary"
    BINARY = "binary"
    KEYWORD = "keyword"


@dataclass(frozen=True)
class Selector:
    kind: SelectorKind
    text: str

    @classmethod
    def parse(cls, text: str) -> "Selector":
        if text.endswith(":"):
            return cls(SelectorKind.KEYWORD, text)
        if text[:1].isalpha() or text[:1] == "_":
            return cls(SelectorKind.UNARY, text)
        return cls(SelectorKind.BINARY, text)

    @classmethod
    def from_keywords(cls, keywords) -> "Selector":
        return cls(SelectorKind.KEYWORD, "".join(keywords))

    @property
    def keywords(self) -> list[str]:
        """``name:address:`` -> ``["name:", "address:"]``."""
        if self.kind is not SelectorKind.KEYWORD:
            return [self.text]
        return [part + ":" for part in self.text.split(":")[:-1]]

    @property
    def arity_groups(self) -> int:
        if self.kind is SelectorKind.UNARY:
            return 0
        if self.kind is SelectorKind.BINARY:
            return 1
        return len(self.keywords)

    def __str__(self) -> str:
        return self.text


# -- expressions -------------------------------------------------------------

@dataclass
class Identifier:
    name: str
    pos: Position = _pos()


@dataclass
class SelfRef:
    pos: Position = _pos()


@dataclass
class FieldRef:
    """``self.name``"""

    name: str
    pos: Position = _pos()


@dataclass
class StringLit:
    value: str
    pos: Position = _pos()


@dataclass
class IntLit:
    value: int
    pos: Position = _pos()


@dataclass
class MessageSend:
    receiver: "Expr"
    selector: Selector
    arg_groups: list  # list[list[Expr]], one group per keyword
    pos: Position = _pos()

    @property
    def args(self) -> list:
        return [a for group in self.arg_groups for a in group]


@dataclass
class Concat:
    left: "Expr"
    right: "Expr"
    pos: Position = _pos()


@dataclass
class Index:
    target: "Expr"
    index: "Expr"
    pos: Position = _pos()


Expr = Union[Identifier, SelfRef, FieldRef, StringLit, IntLit, MessageSend, Concat, Index]


# -- statements --------------------------------------------------------------

@dataclass
class Annotation:
    name: str
    args: list = field(default_factory=list)
    pos: Position = _pos()


@dataclass
class VarDecl:
    mutability: str  # "var" | "let"
    type_name: Optional[str]
    name: str
    init: Optional[Expr] = None
    annotations: list = field(default_factory=list)
    pos: Position = _pos()


@dataclass
class Assign:
    target: Union[Identifier, FieldRef]
    value: Expr
    pos: Position = _pos()


@dataclass
class Return:
    value: Optional[Expr] = None
    pos: Position = _pos()


@dataclass
class ExprStmt:
    expr: Expr
    pos: Position = _pos()


Stmt = Union[VarDecl, Assign, Return, ExprStmt]


# -- declarations ------------------------------------------------------------

@dataclass
class Param:
    type_name: str
    name: str


@dataclass
class FieldDecl:
    mutability: str  # "var", "let", or "" (implicitly read-only)
    type_name: str
    name: str
    annotations: list = field(default_factory=list)
    pos: Position = _pos()

    @property
    def read_only(self) -> bool:
        return self.mutability != "var"


@dataclass
class MethodDecl:
    selector: Selector
    param_groups: list  # list[list[Param]]
    return_type: Optional[str]
    body: list
    annotations: list = field(default_factory=list)
    override: bool = False
    # "new" for compiler-synthesized constructors; never printed
    synthetic: Optional[str] = None
    pos: Position = _pos()

    @property
    def params(self) -> list:
        return [p for group in self.param_groups for p in group]


@dataclass
class PrototypeDecl:
    name: str
    extends: Optional[str]
    members: list  # FieldDecl | MethodDecl in source order
    annotations: list = field(default_factory=list)
    pos: Position = _pos()

    @property
    def fields(self) -> list:
        return [m for m in self.members if isinstance(m, FieldDecl)]

    @property
    def methods(self) -> list:
        return [m for m in self.members if isinstance(m, MethodDecl)]

    def method(self, selector: str) -> Optional[MethodDecl]:
        for m in self.methods:
            if m.selector.text == selector:
                return m
        return None

    def field_named(self, name: str) -> Optional[FieldDecl]:
        for f in self.fields:
            if f.name == name:
                return f
        return None


@dataclass
class SourceUnit:
    package: str
    imports: list
    prototypes: list
    origin: str = field(default="generated", compare=False)


def member_key(member) -> tuple:
    if isinstance(member, MethodDecl):
        return ("method", member.selector.text)
    return ("field", member.name)


def walk_expr(expr):
    """Yield ``expr`` and every sub-expression, pre-order."""
    yield expr
    if isinstance(expr, MessageSend):
        yield from walk_expr(expr.receiver)
        for a in expr.args:
            yield from walk_expr(a)
    elif isinstance(expr, Concat):
        yield from walk_expr(expr.left)
        yield from walk_expr(expr.right)
    elif isinstance(expr, Index):
        yield from walk_expr(expr.target)
        yield from walk_expr(expr.index)


def stmt_exprs(stmt) -> list:
    if isinstance(stmt, VarDecl):
        return [stmt.init] if stmt.init is not None else []
    if isinstance(stmt, Assign):
        return [stmt.value]
    if isinstance(stmt, Return):
        return [stmt.value] if stmt.value is not None else []
    return [stmt.expr]
