"""Command-line driver: assemble, run, obligation checks, popcount
verification, and memory benchmarks.

Exit codes are a function of results only; with the same seed, reports
are byte-identical across runs.  The seed falls back to the
Y86_LOCKSTEP_SEED environment variable.
"""

from __future__ import annotations

import argparse
import os
import random
import sys
import time
from dataclasses import dataclass
from importlib import resources

from . import asm
from .errors import (
    AtomicityViolation,
    InjectedFault,
    PoisonedState,
    Y86Error,
)
from .isa import REGISTER_NAMES, Status
from .lockstep import (
    DemoCases,
    FailureRecord,
    ObligationOutcome,
    ObligationReport,
    Y86Cases,
    check_obligations,
    const_spec,
    create_dual,
    demo_spec,
    raise_injected_fault,
    unsound_const_demo,
    y86_spec,
)
from .machine import ESP, Machine, run_in_lockstep
from .mem_paged import PagedMemory
from .mem_sparse import SparseMemory

DEFAULT_STEPS = 300
DEFAULT_ESP = 8192
EAX, EDX = 0, 2


@dataclass
class RunConfig:
    backend: str = "paged"
    steps: int = DEFAULT_STEPS
    entry: str | None = None
    esp: int = DEFAULT_ESP
    trace: bool = False
    protect_debug: bool = False
    seed: int = 0


def bundled_program(name: str) -> str:
    return resources.files(__package__).joinpath("programs", name).read_text()


def _default_seed() -> int:
    return int(os.environ.get("Y86_LOCKSTEP_SEED", "0"))


# ---------------------------------------------------------------------------
# asm

def cmd_asm(source_path: str, out_path: str | None = None) -> int:
    try:
        text = open(source_path, encoding="utf-8").read()
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        image, symbols = asm.assemble(asm.parse(text))
    except Y86Error as exc:
        print(f"{source_path}: {exc}", file=sys.stderr)
        return 1
    if out_path is None:
        root = source_path[:-3] if source_path.endswith(".ys") else source_path
        out_path = root + ".yim"
    asm.save_image(out_path, image, symbols)
    print(f"{out_path}: {len(image)} bytes, {len(symbols)} symbols")
    return 0


# ---------------------------------------------------------------------------
# run

def _resolve_entry(entry: str | None, symbols: dict[str, int],
                   image: asm.Image) -> int:
    if entry is None:
        if "main" in symbols:
            return symbols["main"]
        pairs = list(image)
        return pairs[0][0] if pairs else 0
    if entry in symbols:
        return symbols[entry]
    try:
        return int(entry, 0)
    except ValueError:
        raise Y86Error(f"entry {entry!r} is neither a symbol nor an address")


def _print_final(machine: Machine, steps: int) -> None:
    print(f"status={machine.status.value} steps={steps} "
          f"eip={machine.eip:#x}")
    print(" ".join(f"{name}={value:#x}"
                   for name, value in zip(REGISTER_NAMES, machine.regs)))


def cmd_run(image_path: str, config: RunConfig) -> int:
    try:
        image, symbols = asm.load_image(image_path)
        entry = _resolve_entry(config.entry, symbols, image)
    except (OSError, Y86Error) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    trace = print if config.trace else None
    if config.backend == "lockstep":
        concrete = Machine(PagedMemory(), eip=entry, esp=config.esp, image=image)
        abstract = Machine(SparseMemory(), eip=entry, esp=config.esp, image=image)
        report = run_in_lockstep(concrete, abstract, config.steps,
                                 seed=config.seed)
        if trace:
            # Re-run the abstract side for the trace; both sides agreed.
            replay = Machine(SparseMemory(), eip=entry, esp=config.esp,
                             image=image)
            replay.run(config.steps, trace=trace)
        machine, steps = concrete, report.steps
        _print_final(machine, steps)
        print(f"correspondence verified at {report.steps} steps, "
              f"{report.addresses_checked} sampled addresses")
    else:
        backend = {"paged": PagedMemory, "sparse": SparseMemory}.get(config.backend)
        if backend is None:
            print(f"error: unknown backend {config.backend!r}", file=sys.stderr)
            return 1
        machine = Machine(backend(), eip=entry, esp=config.esp, image=image)
        steps = machine.run(config.steps, trace=trace)
        _print_final(machine, steps)
    return 0 if machine.status is Status.HLT else 1


# ---------------------------------------------------------------------------
# obligation checking

def _const_scenarios(debug: bool) -> ObligationReport:
    """Scripted protocol behaviors for the abort fixture; each scenario is
    an expected-failure check that passes when the protocol reacts as
    specified."""
    outcomes = []

    def record(name: str, ok: bool, message: str):
        outcome = ObligationOutcome(name, 1)
        if not ok:
            outcome.failures.append(FailureRecord(name, 0, 0, "()", message))
        outcomes.append(outcome)

    # 1. Unprotected completion of a double update is rejected by name.
    dual = create_dual(const_spec(protect=False), debug=debug)
    try:
        dual.invoke("change-fld")
        record("unprotected-double-update", False, "no AtomicityViolation")
    except AtomicityViolation as exc:
        record("unprotected-double-update", "change-fld" in str(exc),
               f"violation does not name the export: {exc}")

    # 2. Protected abort poisons the state; the next invoke fails.
    dual = create_dual(const_spec(protect=True, fault=raise_injected_fault),
                       debug=debug)
    try:
        dual.invoke("change-fld")
        record("protected-abort-poisons", False, "fault did not propagate")
    except InjectedFault:
        if not dual.poisoned:
            record("protected-abort-poisons", False, "state not poisoned")
        else:
            try:
                dual.invoke("get-fld")
                record("protected-abort-poisons", False,
                       "poisoned state accepted an invoke")
            except PoisonedState:
                record("protected-abort-poisons", True, "")

    # 3. Quarantined demonstration of the unsoundness the protocol prevents.
    dual = unsound_const_demo()
    try:
        dual.invoke("change-fld")
        record("unsound-demo", False, "fault did not propagate")
    except InjectedFault:
        observed = dual.invoke("get-fld")
        record("unsound-demo", observed == 1,
               f"expected stale value 1, observed {observed!r}")

    return ObligationReport("const-stobj", 0, outcomes)


def cmd_check(target: str, n_cases: int, seed: int,
              report_path: str | None = None, debug: bool = False) -> int:
    if target == "demo-st":
        spec = demo_spec()
        report = check_obligations(spec, DemoCases(spec), n_cases, seed)
    elif target == "y86":
        report = check_obligations(y86_spec(), Y86Cases(), n_cases, seed)
    elif target == "const-stobj":
        report = _const_scenarios(debug)
    else:
        print(f"error: unknown target {target!r}", file=sys.stderr)
        return 2
    sys.stdout.write(report.to_text())
    if report_path:
        report.write_records(report_path)
    return 0 if report.ok else 1


# ---------------------------------------------------------------------------
# popcount verification

def verify_popcount(width: int, samples: int, seed: int,
                    steps: int = DEFAULT_STEPS) -> tuple[int, int]:
    """Run the bundled popcount program exhaustively for n < 2^width plus
    `samples` random 32-bit inputs; returns (cases, mismatches) against
    the host bit-count oracle."""
    if not 0 <= width <= 32:
        raise ValueError("width must be in 0..32")
    image, symbols = asm.assemble(asm.parse(bundled_program("popcount.ys")))
    base = SparseMemory(dict(image))
    entry = symbols["call-popcount"]
    halt_addr = symbols["halt-of-main"]
    rng = random.Random(seed)
    machine = Machine(SparseMemory())
    cases = 0
    mismatches = 0

    def run_one(n: int) -> None:
        nonlocal cases, mismatches
        machine.reload(base, eip=entry, esp=DEFAULT_ESP, keep_icache=True)
        machine.regs[EDX] = n
        machine.run(steps)
        cases += 1
        if not (machine.status is Status.HLT
                and machine.eip == halt_addr
                and machine.regs[EAX] == bin(n).count("1")):
            mismatches += 1

    for n in range(1 << width):
        run_one(n)
    for _ in range(samples):
        run_one(rng.getrandbits(32))
    return cases, mismatches


def cmd_popcount(width: int, samples: int, seed: int) -> int:
    try:
        cases, mismatches = verify_popcount(width, samples, seed)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"popcount: {cases} inputs (exhaustive width {width} + "
          f"{samples} random), {mismatches} mismatches")
    return 0 if mismatches == 0 else 1


# ---------------------------------------------------------------------------
# benchmark

def _bench_backend(make_mem, blocks: int, ops: int):
    addrs = []
    rng = random.Random(0xBE7C)
    for _ in range(ops):
        block = rng.randrange(blocks)
        addrs.append((block << 24) | rng.getrandbits(24))
    mem = make_mem()
    t0 = time.perf_counter()
    for i, addr in enumerate(addrs):
        mem = mem.write(addr, (i & 0x7F) + 1)
    write_time = time.perf_counter() - t0
    t0 = time.perf_counter()
    total = 0
    for addr in addrs:
        total += mem.read(addr)
    read_time = time.perf_counter() - t0
    if isinstance(mem, PagedMemory):
        resident = (f"{len(mem.array)} bytes backing, "
                    f"{mem.pages_allocated()} pages")
    else:
        resident = f"{len(mem)} entries"
    rate = lambda dt: f"{ops / dt:,.0f}/s" if dt > 0 and ops else "-"
    return rate(write_time), rate(read_time), resident


def cmd_bench(blocks: int, ops: int) -> int:
    print(f"{'backend':<8} {'ops':>9} {'writes':>12} {'reads':>12}  resident")
    if blocks <= 0 or ops <= 0:
        return 0
    for name, make in (("paged", PagedMemory), ("sparse", SparseMemory)):
        writes, reads, resident = _bench_backend(make, blocks, ops)
        print(f"{name:<8} {ops:>9} {writes:>12} {reads:>12}  {resident}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="y86sim",
        description="Y86 simulator: assembler, dual-backend runner, "
                    "lockstep verification harness, benchmarks")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("asm", help="assemble a .ys source into a .yim image")
    p.add_argument("source")
    p.add_argument("-o", "--output", default=None)

    p = sub.add_parser("run", help="load a .yim image and run it")
    p.add_argument("image")
    p.add_argument("--backend", choices=("paged", "sparse", "lockstep"),
                   default="paged")
    p.add_argument("--steps", type=int, default=DEFAULT_STEPS)
    p.add_argument("--entry", default=None,
                   help="entry label or numeric address (default: 'main' "
                        "or the lowest image address)")
    p.add_argument("--esp", type=lambda s: int(s, 0), default=DEFAULT_ESP)
    p.add_argument("--trace", action="store_true")
    p.add_argument("--seed", type=int, default=_default_seed())

    p = sub.add_parser("check", help="run the obligation suites")
    p.add_argument("target", choices=("demo-st", "const-stobj", "y86"))
    p.add_argument("--cases", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--report", default=None,
                   help="also write machine-readable records (JSON lines)")
    p.add_argument("--protect-debug", action="store_true")

    p = sub.add_parser("popcount", help="verify the bundled popcount program")
    p.add_argument("--width", type=int, default=8)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--seed", type=int, default=_default_seed())

    p = sub.add_parser("bench", help="compare the memory backends")
    p.add_argument("--blocks", type=int, default=4)
    p.add_argument("--ops", type=int, default=100_000)

    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "asm":
        return cmd_asm(args.source, args.output)
    if args.command == "run":
        config = RunConfig(backend=args.backend, steps=args.steps,
                           entry=args.entry, esp=args.esp, trace=args.trace,
                           seed=args.seed)
        return cmd_run(args.image, config)
    if args.command == "check":
        return cmd_check(args.target, args.cases, args.seed,
                         report_path=args.report, debug=args.protect_debug)
    if args.command == "popcount":
        return cmd_popcount(args.width, args.samples, args.seed)
    return cmd_bench(args.blocks, args.ops)


if __name__ == "__main__":
    sys.exit(main())
