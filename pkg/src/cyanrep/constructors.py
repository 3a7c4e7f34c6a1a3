"""Constructor synthesis: every ``init``/``init:`` gets a matching ``new``/``new:``.

The synthesized method lives only in the in-memory tree (``synthetic="new"``);
the printer never emits it, and the interpreter implements it natively by
allocating an instance and forwarding to ``init``.
"""

from __future__ import annotations

import copy

from .nodes import MethodDecl, Selector, SourceUnit

CONSTRUCTOR_FOR = {"init": "new", "init:": "new:"}


def constructor_selector(init_selector: str) -> str:
    return CONSTRUCTOR_FOR[init_selector]


def synthesize_prototype(proto) -> bool:
    """Add missing constructors to ``proto`` in place. Returns True if changed."""
    changed = False
    existing = {m.selector.text for m in proto.methods}
    members = []
    for member in proto.members:
        members.append(member)
        if not isinstance(member, MethodDecl) or member.selector.text not in CONSTRUCTOR_FOR:
            continue
        new_sel = CONSTRUCTOR_FOR[member.selector.text]
        if new_sel in existing:
            continue
        members.append(MethodDecl(
            Selector.parse(new_sel),
            copy.deepcopy(member.param_groups),
            proto.name,
            [],
            synthetic="new",
            pos=member.pos,
        ))
        existing.add(new_sel)
        changed = True
    proto.members = members
    return changed


def synthesize_constructors(unit: SourceUnit) -> SourceUnit:
    """Return a copy of ``unit`` with ``new``/``new:`` added next to each ``init``."""
    out = copy.deepcopy(unit)
    for proto in out.prototypes:
        synthesize_prototype(proto)
    return out
