"""Command-line entry point: ``expand``, ``check``, ``run`` and ``simulate``.

Exit codes: 0 success, 1 diagnostics (compile errors, findings, runtime
errors, divergence, liveness timeout), 2 usage error, 3 internal error.
Diagnostics always go to stderr.
"""

from __future__ import annotations

import argparse
import sys
import traceback
from pathlib import Path

from .cluster import Cluster, ScriptError, parse_script
from .determinism import NonDetRegistry, RegistryError, default_registry, load_registry
from .errors import CompileError, CyanRuntimeError
from .interpreter import Interpreter, LocalHost
from .netsim import NetConfig, Partition, parse_delay
from .pipeline import compile_units, expanded_files, load_units, render_diagnostics

EXIT_OK = 0
EXIT_DIAGNOSTICS = 1
EXIT_USAGE = 2
EXIT_INTERNAL = 3

DEFAULT_REGISTRY_PATH = "nondet.registry"


class UsageError(Exception):
    pass


def _probability(text: str) -> float:
    p = float(text)
    if not 0.0 <= p <= 1.0:
        raise argparse.ArgumentTypeError(f"probability {text} outside [0, 1]")
    return p


def _u64(text: str) -> int:
    n = int(text, 0)
    if not 0 <= n < 1 << 64:
        raise argparse.ArgumentTypeError(f"seed {text} is not an unsigned 64-bit integer")
    return n


def _delay(text: str) -> tuple:
    try:
        lo, hi = parse_delay(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    if lo < 0 or lo > hi:
        raise argparse.ArgumentTypeError(f"bad delay range {text}")
    return (lo, hi)


def _partition(text: str) -> Partition:
    try:
        return Partition.parse(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected START..END:A,B|C,..., got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cyanrep", description="Toolchain for replicated mini-language programs.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("inputs", nargs="+", help="source files or directories of .cyn files")
        p.add_argument("--nondet", metavar="PATH",
                       help=f"non-determinism registry (default: ./{DEFAULT_REGISTRY_PATH} if present)")
        p.add_argument("--no-default-registry", action="store_true",
                       help="do not merge the built-in registry entries")

    p = sub.add_parser("expand", help="write the expanded program, one file per prototype")
    common(p)
    p.add_argument("--out", required=True, metavar="DIR")

    p = sub.add_parser("check", help="report non-deterministic calls reachable from actions")
    common(p)

    p = sub.add_parser("run", help="run Program on a single local replica")
    common(p)
    p.add_argument("--arg", action="append", default=None, metavar="VALUE",
                   help="program argument after args[0] (repeatable; default: 0)")

    p = sub.add_parser("simulate", help="run replicas under the network simulator")
    common(p)
    p.add_argument("--script", metavar="PATH", help="scripted action calls")
    p.add_argument("--replicas", type=int, metavar="N", help="override numberProcess")
    p.add_argument("--seed", type=_u64, default=0)
    p.add_argument("--drop", type=_probability, default=0.0)
    p.add_argument("--dup", type=_probability, default=0.0)
    p.add_argument("--delay", type=_delay, metavar="MIN..MAX", help="default derives from rtt")
    p.add_argument("--partition", type=_partition, action="append", default=[],
                   metavar="START..END:A,B|C", help="cut replica groups apart for a time window")
    p.add_argument("--log-dir", metavar="DIR", help="keep decision logs on disk under DIR")
    p.add_argument("--max-time", type=int, default=600_000, metavar="MS")
    p.add_argument("--trace", action="store_true", help="print the event trace")
    return ap


def _registry(args) -> NonDetRegistry:
    base = NonDetRegistry() if args.no_default_registry else default_registry()
    if args.nondet is not None:
        path = Path(args.nondet)
        if not path.is_file():
            raise UsageError(f"registry file not found: {path}")
        return base | load_registry(path)
    if Path(DEFAULT_REGISTRY_PATH).is_file():
        return base | load_registry(DEFAULT_REGISTRY_PATH)
    return base


def _compile(args, err):
    for raw in args.inputs:
        if not Path(raw).exists():
            raise UsageError(f"no such file or directory: {raw}")
    registry = _registry(args)
    try:
        comp = compile_units(load_units(args.inputs), registry=registry)
    except CompileError as exc:
        for line in render_diagnostics(exc.diagnostics):
            print(line, file=err)
        return None
    if comp.diagnostics:
        for line in render_diagnostics(comp.diagnostics):
            print(line, file=err)
    return comp


def cmd_expand(args, out, err) -> int:
    comp = _compile(args, err)
    if comp is None or not comp.ok:
        return EXIT_DIAGNOSTICS
    files = expanded_files(comp.expanded)
    target = Path(args.out)
    target.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        (target / name).write_text(text, encoding="utf-8")
        print(str(target / name), file=out)
    return EXIT_OK


def cmd_check(args, out, err) -> int:
    comp = _compile(args, err)
    if comp is None or not comp.ok:
        return EXIT_DIAGNOSTICS
    return EXIT_OK


def cmd_run(args, out, err) -> int:
    comp = _compile(args, err)
    if comp is None or not comp.ok:
        return EXIT_DIAGNOSTICS
    argv = ["Program"] + (args.arg if args.arg is not None else ["0"])
    interp = Interpreter(comp.expanded, LocalHost(), out=lambda line: print(line, file=out))
    try:
        interp.run_main(argv)
    except CyanRuntimeError as exc:
        print(f"runtime error: {exc}", file=err)
        return EXIT_DIAGNOSTICS
    return EXIT_OK


def cmd_simulate(args, out, err) -> int:
    if args.replicas is not None and args.replicas < 1:
        raise UsageError("--replicas must be at least 1")
    script = []
    if args.script is not None:
        path = Path(args.script)
        if not path.is_file():
            raise UsageError(f"script file not found: {path}")
        try:
            script = parse_script(path.read_text(encoding="utf-8"), origin=str(path))
        except ScriptError as exc:
            print(f"error: {exc}", file=err)
            return EXIT_DIAGNOSTICS
    comp = _compile(args, err)
    if comp is None or not comp.ok:
        return EXIT_DIAGNOSTICS
    config = NetConfig(seed=args.seed, drop=args.drop, dup=args.dup, delay=args.delay,
                       partitions=tuple(args.partition))
    cluster = Cluster(comp.expanded, replicas=args.replicas, config=config, log_dir=args.log_dir,
                      trace=args.trace, max_time=args.max_time)
    cluster.load_script(script)
    result = cluster.run()
    if args.trace:
        for line in result.trace:
            print(line, file=out)
    for replica, lines in result.outputs.items():
        for line in lines:
            print(f"[{replica}] {line}", file=out)
    for msg in result.errors:
        print(f"runtime error: {msg}", file=err)
    for entry in result.skipped:
        print(f"warning: script line {entry.line} skipped: replica {entry.replica} is down",
              file=err)
    for replica, state in result.states.items():
        print(f"replica {replica}: {state}", file=out)
    if result.status == "timeout":
        print(f"error: liveness timeout at {result.end_time} ms", file=err)
        print("LIVENESS TIMEOUT", file=out)
        return EXIT_DIAGNOSTICS
    if result.status == "diverged":
        print("error: replica states differ", file=err)
        print("DIVERGED", file=out)
        return EXIT_DIAGNOSTICS
    print("CONVERGED", file=out)
    return EXIT_OK


COMMANDS = {"expand": cmd_expand, "check": cmd_check, "run": cmd_run, "simulate": cmd_simulate}


def main(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        return COMMANDS[args.command](args, out, err)
    except UsageError as exc:
        print(f"error: {exc}", file=err)
        return EXIT_USAGE
    except RegistryError as exc:
        print(f"error: {exc}", file=err)
        return EXIT_DIAGNOSTICS
    except Exception:
        print("internal error:", file=err)
        traceback.print_exc(file=err)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
