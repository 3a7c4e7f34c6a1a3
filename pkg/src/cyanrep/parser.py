"""Recursive-descent parser.

Grammar (informal)::

    unit      := ['package' qname] {'import' qname} {prototype}
    prototype := {annot} 'object' IDENT ['extends' IDENT]
                 ('{' {member} '}' | {member} 'end')
    member    := {annot} (['override'] 'func' header block | field)
    field     := ['var' | 'let'] type IDENT [';']
    header    := IDENT | (KEYWORD [param {',' param}])+  ['->' type]
    block     := '{' [stmt {';' stmt}] [';'] '}'
    stmt      := {annot} (vardecl | 'return' [expr] | assign | expr)
    expr      := binary {KEYWORD binary {',' binary}}
    binary    := unary {binop unary}
    unary     := postfix {IDENT}
    postfix   := primary {'[' expr ']'}

Message precedence follows Smalltalk: unary binds tighter than binary,
binary tighter than keyword.
"""

from __future__ import annotations

from .errors import ParseError, Position, error
from .lexer import EOF, IDENT, INT, KEYWORD, OP, PUNCT, RESERVED, STRING, Token, tokenize
from .nodes import (
    Annotation, Assign, Concat, ExprStmt, FieldDecl, FieldRef, Identifier, Index,
    IntLit, MessageSend, MethodDecl, Param, PrototypeDecl, Return, Selector,
    SelectorKind, SelfRef, SourceUnit, StringLit, VarDecl,
)

BINARY_OPERATORS = ("++", "+", "-", "*")
DEFAULT_PACKAGE = "main"


class Parser:
    def __init__(self, tokens: list[Token], origin: str = "<memory>"):
        self.tokens = tokens
        self.i = 0
        self.origin = origin

    # -- token helpers -------------------------------------------------------

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def peek(self, k: int = 1) -> Token:
        j = min(self.i + k, len(self.tokens) - 1)
        return self.tokens[j]

    def advance(self) -> Token:
        t = self.tokens[self.i]
        if t.kind != EOF:
            self.i += 1
        return t

    def at_word(self, word: str) -> bool:
        return self.tok.is_(IDENT, word)

    def at_punct(self, p: str) -> bool:
        return self.tok.is_(PUNCT, p)

    def at_op(self, op: str) -> bool:
        return self.tok.is_(OP, op)

    def fail(self, expected: str):
        raise ParseError([error(f"expected {expected}, found {self.tok.describe()}", self.tok.pos)])

    def expect_punct(self, p: str) -> Token:
        if not self.at_punct(p):
            self.fail(f"'{p}'")
        return self.advance()

    def expect_word(self, word: str) -> Token:
        if not self.at_word(word):
            self.fail(f"'{word}'")
        return self.advance()

    def expect_ident(self, what: str = "identifier") -> str:
        t = self.tok
        if t.kind != IDENT or t.value in RESERVED:
            self.fail(what)
        self.advance()
        return t.value

    def at_plain_ident(self) -> bool:
        return self.tok.kind == IDENT and self.tok.value not in RESERVED

    # -- declarations --------------------------------------------------------

    def parse_unit(self) -> SourceUnit:
        package = DEFAULT_PACKAGE
        imports = []
        if self.at_word("package"):
            self.advance()
            package = self.qualified_name()
        while self.at_word("import"):
            self.advance()
            imports.append(self.qualified_name())
        prototypes = []
        while self.tok.kind != EOF:
            prototypes.append(self.prototype())
        return SourceUnit(package, imports, prototypes, origin=self.origin)

    def qualified_name(self) -> str:
        parts = [self.expect_ident("package name")]
        while self.at_punct("."):
            self.advance()
            parts.append(self.expect_ident("package name"))
        return ".".join(parts)

    def annotations(self) -> list[Annotation]:
        found = []
        while self.at_punct("@"):
            at = self.advance()
            name = self.expect_ident("metaobject name")
            args = []
            if self.at_punct("("):
                self.advance()
                if not self.at_punct(")"):
                    args.append(self.binary())
                    while self.at_punct(","):
                        self.advance()
                        args.append(self.binary())
                self.expect_punct(")")
            found.append(Annotation(name, args, pos=at.pos))
        return found

    def prototype(self) -> PrototypeDecl:
        annots = self.annotations()
        start = self.expect_word("object")
        name = self.expect_ident("prototype name")
        extends = None
        if self.at_word("extends"):
            self.advance()
            extends = self.expect_ident("supertype name")
        braced = self.at_punct("{")
        if braced:
            self.advance()
        members = []
        while True:
            if braced and self.at_punct("}"):
                self.advance()
                break
            if not braced and self.at_word("end"):
                self.advance()
                break
            if self.tok.kind == EOF:
                self.fail("'}'" if braced else "'end'")
            members.append(self.member())
        return PrototypeDecl(name, extends, members, annots, pos=start.pos)

    def member(self):
        annots = self.annotations()
        if self.at_punct("}") or self.at_word("end") or self.tok.kind == EOF:
            raise ParseError([error("annotation is not followed by a declaration", annots[-1].pos)])
        if self.at_word("override") or self.at_word("func"):
            return self.method(annots)
        return self.field(annots)

    def field(self, annots) -> FieldDecl:
        start = self.tok.pos
        mutability = ""
        if self.at_word("var") or self.at_word("let"):
            mutability = self.advance().value
        type_name = self.type_name()
        name = self.expect_ident("field name")
        if self.at_punct(";"):
            self.advance()
        return FieldDecl(mutability, type_name, name, annots, pos=start)

    def type_name(self) -> str:
        base = self.expect_ident("type name")
        if not self.at_op("<"):
            return base
        self.advance()
        args = [self.type_name()]
        while self.at_punct(","):
            self.advance()
            args.append(self.type_name())
        if not self.at_op(">"):
            self.fail("'>'")
        self.advance()
        return f"{base}<{', '.join(args)}>"

    def method(self, annots) -> MethodDecl:
        start = self.tok.pos
        override = False
        if self.at_word("override"):
            self.advance()
            override = True
        self.expect_word("func")
        if self.tok.kind == KEYWORD:
            keywords = []
            groups = []
            while self.tok.kind == KEYWORD:
                keywords.append(self.advance().value)
                group = []
                if self.at_plain_ident():
                    group.append(self.param())
                    while self.at_punct(","):
                        self.advance()
                        group.append(self.param())
                groups.append(group)
            selector = Selector.from_keywords(keywords)
        else:
            selector = Selector(SelectorKind.UNARY, self.expect_ident("method selector"))
            groups = []
        return_type = None
        if self.at_op("->"):
            self.advance()
            return_type = self.type_name()
        body = self.block()
        return MethodDecl(selector, groups, return_type, body, annots, override, pos=start)

    def param(self) -> Param:
        type_name = self.type_name()
        return Param(type_name, self.expect_ident("parameter name"))

    # -- statements ----------------------------------------------------------

    def block(self) -> list:
        self.expect_punct("{")
        stmts = self.statements(closer="}")
        self.expect_punct("}")
        return stmts

    def statements(self, closer: str = None) -> list:
        stmts = []

        def at_close():
            if closer is None:
                return self.tok.kind == EOF
            return self.at_punct(closer)

        while not at_close():
            stmts.append(self.statement())
            if self.at_punct(";"):
                self.advance()
            elif not at_close():
                self.fail("';'")
        return stmts

    def statement(self):
        annots = self.annotations()
        start = self.tok.pos
        if self.at_word("var") or self.at_word("let"):
            return self.var_decl(annots)
        if annots:
            raise ParseError([error("annotation must precede a variable declaration", annots[0].pos)])
        if self.at_word("return"):
            self.advance()
            if self.at_punct(";") or self.at_punct("}") or self.tok.kind == EOF:
                return Return(None, pos=start)
            return Return(self.expression(), pos=start)
        if self.at_plain_ident() and self.peek().is_(OP, "="):
            target = Identifier(self.advance().value, pos=start)
            self.advance()
            return Assign(target, self.expression(), pos=start)
        if (self.at_word("self") and self.peek().is_(PUNCT, ".")
                and self.peek(3).is_(OP, "=")):
            self.advance()
            self.advance()
            target = FieldRef(self.expect_ident("field name"), pos=start)
            self.advance()
            return Assign(target, self.expression(), pos=start)
        return ExprStmt(self.expression(), pos=start)

    def var_decl(self, annots) -> VarDecl:
        start = self.tok.pos
        mutability = self.advance().value
        type_name = None
        nxt = self.peek()
        if not (nxt.is_(OP, "=") or nxt.is_(PUNCT, ";") or nxt.is_(PUNCT, "}") or nxt.kind == EOF):
            type_name = self.type_name()
        name = self.expect_ident("variable name")
        init = None
        if self.at_op("="):
            self.advance()
            init = self.expression()
        return VarDecl(mutability, type_name, name, init, annots, pos=start)

    # -- expressions ---------------------------------------------------------

    def expression(self):
        receiver = self.binary()
        if self.tok.kind != KEYWORD:
            return receiver
        start = receiver_pos(receiver, self.tok.pos)
        keywords = []
        groups = []
        while self.tok.kind == KEYWORD:
            keywords.append(self.advance().value)
            group = [self.binary()]
            while self.at_punct(","):
                self.advance()
                group.append(self.binary())
            groups.append(group)
        return MessageSend(receiver, Selector.from_keywords(keywords), groups, pos=start)

    def binary(self):
        left = self.unary()
        while self.tok.kind == OP and self.tok.value in BINARY_OPERATORS:
            op = self.advance()
            right = self.unary()
            if op.value == "++":
                left = Concat(left, right, pos=op.pos)
            else:
                left = MessageSend(left, Selector(SelectorKind.BINARY, op.value), [[right]], pos=op.pos)
        return left

    def unary(self):
        expr = self.postfix()
        while self.at_plain_ident():
            t = self.advance()
            expr = MessageSend(expr, Selector(SelectorKind.UNARY, t.value), [], pos=t.pos)
        return expr

    def postfix(self):
        expr = self.primary()
        while self.at_punct("["):
            t = self.advance()
            index = self.expression()
            self.expect_punct("]")
            expr = Index(expr, index, pos=t.pos)
        return expr

    def primary(self):
        t = self.tok
        if t.kind == STRING:
            self.advance()
            return StringLit(t.value, pos=t.pos)
        if t.kind == INT:
            self.advance()
            return IntLit(t.value, pos=t.pos)
        if t.is_(OP, "-") and self.peek().kind == INT:
            self.advance()
            return IntLit(-self.advance().value, pos=t.pos)
        if t.is_(IDENT, "self"):
            self.advance()
            if self.at_punct("."):
                self.advance()
                return FieldRef(self.expect_ident("field name"), pos=t.pos)
            return SelfRef(pos=t.pos)
        if self.at_plain_ident():
            self.advance()
            return Identifier(t.value, pos=t.pos)
        if t.is_(PUNCT, "("):
            self.advance()
            expr = self.expression()
            self.expect_punct(")")
            return expr
        self.fail("expression")


def receiver_pos(expr, fallback: Position) -> Position:
    return getattr(expr, "pos", fallback)


def _finish(parser: Parser, what: str):
    if parser.tok.kind != EOF:
        parser.fail(f"end of {what}")


def parse_unit(tokens: list[Token], origin: str = "<memory>") -> SourceUnit:
    return Parser(tokens, origin).parse_unit()


def parse_source(text: str, origin: str = "<memory>") -> SourceUnit:
    return parse_unit(tokenize(text, origin), origin)


def parse_method(text: str, origin: str = "generated") -> MethodDecl:
    p = Parser(tokenize(text, origin), origin)
    m = p.member()
    _finish(p, "method")
    if not isinstance(m, MethodDecl):
        raise ParseError([error("expected a method declaration", m.pos)])
    return m


def parse_statements(text: str, origin: str = "generated") -> list:
    p = Parser(tokenize(text, origin), origin)
    return p.statements()


def parse_expression(text: str, origin: str = "<memory>"):
    p = Parser(tokenize(text, origin), origin)
    e = p.expression()
    _finish(p, "expression")
    return e
