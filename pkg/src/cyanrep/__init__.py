"""Annotation-driven active replication for a small prototype-based language.

The toolchain parses source, runs compile-time metaobjects that rewrite
annotated declarations, checks replicated actions for non-deterministic
calls, and runs the result either locally or as simulated replicas kept
consistent by multi-Paxos.
"""

from .errors import CompileError, CyanRuntimeError, Diagnostic, RecoveryError
from .pipeline import compile_sources, compile_units, expanded_files, load_units

__all__ = [
    "CompileError", "CyanRuntimeError", "Diagnostic", "RecoveryError",
    "compile_sources", "compile_units", "expanded_files", "load_units",
]
__version__ = "0.1.0"
