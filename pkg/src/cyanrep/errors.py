"""Diagnostics and the exception types raised across the toolchain."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional


@dataclass(frozen=True, order=True)
class Position:
    origin: str = "<memory>"
    line: int = 0
    column: int = 0

    def __str__(self) -> str:
        return f"{self.origin}:{self.line}:{self.column}"


NOWHERE = Position()


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" | "warning"
    message: str
    position: Position = NOWHERE
    path: tuple = field(default=())

    @property
    def is_error(self) -> bool:
        return self.severity == "error"

    def render(self) -> str:
        where = "" if self.position == NOWHERE else f"{self.position}: "
        return f"{where}{self.severity}: {self.message}"


def error(message: str, position: Optional[Position] = None, path: tuple = ()) -> Diagnostic:
    return Diagnostic("error", message, position or NOWHERE, path)


class CompileError(Exception):
    """Raised when a compilation stage produces error diagnostics."""

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("\n".join(d.render() for d in self.diagnostics))


class LexError(CompileError):
    pass


class ParseError(CompileError):
    pass


class ExpansionError(CompileError):
    """A metaobject produced edits that cannot be applied."""


class CyanRuntimeError(Exception):
    """Raised by the interpreter: message-not-understood, cast failures, etc."""


class SerializationError(CyanRuntimeError):
    pass


class RecoveryError(Exception):
    """A decision log is corrupted somewhere other than its tail."""
