"""parse -> synthesize constructors -> resolve -> ATI -> apply edits -> DSA2."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .constructors import synthesize_constructors
from .determinism import NonDetRegistry, build_call_graph, default_registry
from .errors import CompileError, Diagnostic, error
from .metaobjects import DEFAULT_METAOBJECTS
from .mop import (
    ExpandedProgram, apply_edits, bind_annotations, metaobject_index, run_phase_ati,
    run_phase_dsa2,
)
from .nodes import SourceUnit
from .parser import parse_source
from .printer import format_unit
from .resolver import Program, resolve

SOURCE_SUFFIX = ".cyn"


@dataclass
class Compilation:
    source: Program
    bindings: list
    edits: list
    expanded: ExpandedProgram
    diagnostics: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not any(d.is_error for d in self.diagnostics)


def parse_file(path) -> SourceUnit:
    p = Path(path)
    unit = parse_source(p.read_text(encoding="utf-8"), origin=str(p))
    if len(unit.prototypes) > 1:
        raise CompileError([error(f"a source file may declare at most one prototype "
                                  f"({len(unit.prototypes)} found)", unit.prototypes[1].pos)])
    return unit


def load_units(paths) -> list[SourceUnit]:
    """Parse source files; directories contribute their ``*.cyn`` files, sorted."""
    files = []
    for raw in paths:
        p = Path(raw)
        if p.is_dir():
            files.extend(sorted(p.glob(f"*{SOURCE_SUFFIX}")))
        else:
            files.append(p)
    units, diags = [], []
    for f in files:
        try:
            units.append(parse_file(f))
        except CompileError as exc:
            diags.extend(exc.diagnostics)
    if diags:
        raise CompileError(diags)
    return units


def compile_units(units, metaobjects=DEFAULT_METAOBJECTS,
                  registry: Optional[NonDetRegistry] = None) -> Compilation:
    """Run the whole front half of the toolchain.

    Parse, resolve and ATI problems raise :class:`CompileError`; DSA2
    findings come back in ``Compilation.diagnostics``.
    """
    units = [synthesize_constructors(u) for u in units]
    program = resolve(units, metaobject_index(metaobjects), strict=False)
    bindings = bind_annotations(program, metaobjects)
    edits = run_phase_ati(program, metaobjects, bindings)
    expanded = apply_edits(program, edits, metaobjects)
    extras = {
        "registry": registry if registry is not None else default_registry(),
        "call_graph": build_call_graph(expanded),
    }
    diags = run_phase_dsa2(expanded, bindings, extras)
    return Compilation(program, bindings, edits, expanded, diags)


def compile_sources(texts, **kw) -> Compilation:
    """Convenience for tests: compile in-memory source texts."""
    units = [parse_source(t, origin=f"<source {i}>") for i, t in enumerate(texts)]
    return compile_units(units, **kw)


def expanded_files(program: Program) -> dict:
    """One canonical source file per prototype, keyed by file name."""
    out = {}
    for unit in program.units:
        for proto in unit.prototypes:
            single = SourceUnit(unit.package, list(unit.imports), [proto])
            out[f"{proto.name}{SOURCE_SUFFIX}"] = format_unit(single)
    return dict(sorted(out.items()))


def render_diagnostics(diags: list[Diagnostic]) -> list[str]:
    return [d.render() for d in diags]
