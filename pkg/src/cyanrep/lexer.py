"""Tokenizer for the mini-language.

Identifiers immediately followed by ``:`` lex as a single KEYWORD token
(``name:``), which is what makes keyword messages parseable without
lookahead. Comments are dropped; every token keeps its line and column.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import LexError, Position, error

IDENT = "IDENT"
KEYWORD = "KEYWORD"
STRING = "STRING"
INT = "INT"
OP = "OP"
PUNCT = "PUNCT"
EOF = "EOF"

RESERVED = frozenset(
    {"package", "import", "object", "extends", "end", "func", "var", "let",
     "return", "self", "override"}
)

# longest first
OPERATORS = ("++", "->", "+", "-", "*", "=", "<", ">")
PUNCTUATION = frozenset("{}()[];,.@")

_ESCAPES = {"n": "\n", "t": "\t", '"': '"', "\\": "\\"}


@dataclass(frozen=True)
class Token:
    kind: str
    value: object
    pos: Position

    def is_(self, kind: str, value=None) -> bool:
        return self.kind == kind and (value is None or self.value == value)

    def describe(self) -> str:
        if self.kind == EOF:
            return "end of input"
        if self.kind == STRING:
            return f'string "{self.value}"'
        return f"'{self.value}'"


def tokenize(text: str, origin: str = "<memory>") -> list[Token]:
    tokens: list[Token] = []
    i = 0
    line = 1
    line_start = 0
    n = len(text)

    def here(at: int) -> Position:
        return Position(origin, line, at - line_start + 1)

    while i < n:
        c = text[i]
        if c == "\n":
            line += 1
            line_start = i + 1
            i += 1
            continue
        if c in " \t\r\f":
            i += 1
            continue
        if text.startswith("//", i):
            while i < n and text[i] != "\n":
                i += 1
            continue
        if text.startswith("/*", i):
            start = here(i)
            close = text.find("*/", i + 2)
            if close < 0:
                raise LexError([error("unterminated comment", start)])
            for j in range(i, close):
                if text[j] == "\n":
                    line += 1
                    line_start = j + 1
            i = close + 2
            continue
        if c == '"':
            start = here(i)
            i += 1
            chars = []
            while True:
                if i >= n or text[i] == "\n":
                    raise LexError([error("unterminated string literal", start)])
                ch = text[i]
                if ch == '"':
                    i += 1
                    break
                if ch == "\\":
                    if i + 1 >= n or text[i + 1] not in _ESCAPES:
                        raise LexError([error("bad escape in string literal", here(i))])
                    chars.append(_ESCAPES[text[i + 1]])
                    i += 2
                    continue
                chars.append(ch)
                i += 1
            tokens.append(Token(STRING, "".join(chars), start))
            continue
        if c.isdigit():
            start = i
            while i < n and text[i].isdigit():
                i += 1
            tokens.append(Token(INT, int(text[start:i]), here(start)))
            continue
        if c.isalpha() or c == "_":
            start = i
            while i < n and (text[i].isalnum() or text[i] == "_"):
                i += 1
            word = text[start:i]
            # `name:` is a keyword unless it is really `name :=`-like; no such
            # operator exists in this language, so a trailing colon always binds.
            if i < n and text[i] == ":" and word not in RESERVED:
                i += 1
                tokens.append(Token(KEYWORD, word + ":", here(start)))
            else:
                tokens.append(Token(IDENT, word, here(start)))
            continue
        for op in OPERATORS:
            if text.startswith(op, i):
                tokens.append(Token(OP, op, here(i)))
                i += len(op)
                break
        else:
            if c in PUNCTUATION:
                tokens.append(Token(PUNCT, c, here(i)))
                i += 1
            else:
                raise LexError([error(f"unexpected character {c!r}", here(i))])
    tokens.append(Token(EOF, None, here(i)))
    return tokens
