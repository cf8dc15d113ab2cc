"""Y86 processor model: machine state, step and run, over either memory.

The memory backend is anything with `read(addr) -> byte` and
`write(addr, byte) -> memory`; the paged backend mutates and returns
itself, the sparse backend returns a new value.  A machine is
single-writer; distinct machines may run on distinct threads.

Decoded instructions are cached by address.  Every byte write is checked
against the cached instruction spans so self-modifying code re-decodes.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .errors import CorrespondenceFailure, InvalidInstruction
from .isa import (
    MASK32,
    Flags,
    Instruction,
    Kind,
    Status,
    alu_bits,
    cond_holds,
    decode,
    format_instruction,
)

__all__ = ["Machine", "LockstepReport", "run_in_lockstep", "ESP"]

ESP = 4  # stack pointer register number

# Cap on the write-tracking set used by reload(); past this the decode
# cache is simply dropped on reload.
_WRITE_TRACK_LIMIT = 1 << 20


class Machine:
    """Registers, instruction pointer, flags, status, and a memory backend."""

    __slots__ = (
        "regs", "eip", "zf", "sf", "of", "status", "mem",
        "_updates", "_last_update", "icache_clears",
        "_icache", "_icache_addrs", "_writes_since_reload", "_writes_overflow",
    )

    def __init__(self, mem, *, eip=0, esp=None, flags=None, status=None,
                 image=()):
        """Create a machine, loading every (address, byte) pair of `image`.

        `status=None` means AOK; `flags=None` means all zero; `esp`, when
        given, initializes the stack pointer register.
        """
        self.regs = [0] * 8
        self.zf = self.sf = self.of = 0
        self.mem = mem
        self._updates = 0
        self._last_update = None
        self.icache_clears = 0
        self._icache: dict[int, tuple[Instruction, int]] = {}
        self._icache_addrs: set[int] = set()
        self._writes_since_reload: set[int] = set()
        self._writes_overflow = False
        for addr, byte in image:
            self.mem = self.mem.write(addr, byte)
        if not 0 <= eip <= MASK32:
            raise ValueError("eip must be a 32-bit value")
        self.eip = eip
        if esp is not None:
            if not 0 <= esp <= MASK32:
                raise ValueError("esp must be a 32-bit value")
            self.regs[ESP] = esp
        if flags is not None:
            self.zf, self.sf, self.of = flags.zf, flags.sf, flags.of
        self.status = Status.AOK if status is None else status

    # -- observers ---------------------------------------------------------

    @property
    def flags(self) -> Flags:
        return Flags(self.zf, self.sf, self.of)

    @property
    def update_count(self) -> int:
        """Primitive updates so far: own fields plus the memory's."""
        return self._updates + getattr(self.mem, "update_count", 0)

    @property
    def last_update(self):
        mem_last = getattr(self.mem, "last_update", None)
        return self._last_update if self._last_update is not None else mem_last

    # -- counted single-field updaters --------------------------------------

    def set_reg(self, i: int, value: int) -> None:
        if not 0 <= i < 8:
            raise ValueError(f"register number {i} not in 0..7")
        if not 0 <= value <= MASK32:
            raise ValueError("register value must be 32-bit")
        self.regs[i] = value
        self._updates += 1
        self._last_update = ("reg", i, value)

    def set_eip(self, value: int) -> None:
        if not 0 <= value <= MASK32:
            raise ValueError("eip must be 32-bit")
        self.eip = value
        self._updates += 1
        self._last_update = ("eip", value)

    def set_flags(self, flags: Flags) -> None:
        self.zf, self.sf, self.of = flags.zf, flags.sf, flags.of
        self._updates += 1
        self._last_update = ("flags", flags)

    def set_status(self, status: Status) -> None:
        self.status = status
        self._updates += 1
        self._last_update = ("status", status)

    # -- memory access -------------------------------------------------------

    def read_byte(self, addr: int) -> int:
        return self.mem.read(addr & MASK32)

    def write_byte(self, addr: int, value: int) -> None:
        addr &= MASK32
        if addr in self._icache_addrs:
            self._icache.clear()
            self._icache_addrs.clear()
            self.icache_clears += 1
        if len(self._writes_since_reload) < _WRITE_TRACK_LIMIT:
            self._writes_since_reload.add(addr)
        else:
            self._writes_overflow = True
        self.mem = self.mem.write(addr, value)
        self._last_update = ("mem", addr, value)

    def read_word(self, addr: int) -> int:
        rd = self.mem.read
        return (rd(addr & MASK32)
                | rd((addr + 1) & MASK32) << 8
                | rd((addr + 2) & MASK32) << 16
                | rd((addr + 3) & MASK32) << 24)

    def write_word(self, addr: int, value: int) -> None:
        value &= MASK32
        self.write_byte(addr, value & 0xFF)
        self.write_byte(addr + 1, (value >> 8) & 0xFF)
        self.write_byte(addr + 2, (value >> 16) & 0xFF)
        self.write_byte(addr + 3, value >> 24)

    # -- execution -----------------------------------------------------------

    def step(self) -> None:
        """Execute one instruction; no effect unless status is AOK."""
        if self.status is not Status.AOK:
            return
        eip = self.eip
        entry = self._icache.get(eip)
        if entry is None:
            entry = self._fetch_decode(eip)
            if entry is None:
                return
        self._exec(entry[0], entry[1])

    def _fetch_decode(self, eip):
        rd = self.mem.read
        window = bytes(rd((eip + k) & MASK32) for k in range(6))
        try:
            instr, length = decode(window, 0)
        except InvalidInstruction:
            self.status = Status.INS
            self._updates += 1
            return None
        entry = (instr, length)
        self._icache[eip] = entry
        addrs = self._icache_addrs
        for k in range(length):
            addrs.add((eip + k) & MASK32)
        return entry

    def _exec(self, instr: Instruction, length: int) -> None:
        kind = instr.kind
        r = self.regs
        if kind is Kind.ALU:
            res, zf, sf, of = alu_bits(instr.fn, r[instr.ra], r[instr.rb])
            r[instr.rb] = res
            self.zf = zf
            self.sf = sf
            self.of = of
            self.eip = (self.eip + length) & MASK32
            self._updates += 3
        elif kind is Kind.JMP:
            if cond_holds(instr.fn, self.zf, self.sf, self.of):
                self.eip = instr.value
            else:
                self.eip = (self.eip + length) & MASK32
            self._updates += 1
        elif kind is Kind.RRMOVL:
            if cond_holds(instr.fn, self.zf, self.sf, self.of):
                r[instr.rb] = r[instr.ra]
                self._updates += 1
            self.eip = (self.eip + length) & MASK32
            self._updates += 1
        elif kind is Kind.IRMOVL:
            r[instr.rb] = instr.value
            self.eip = (self.eip + length) & MASK32
            self._updates += 2
        elif kind is Kind.MRMOVL:
            r[instr.ra] = self.read_word(r[instr.rb] + instr.value)
            self.eip = (self.eip + length) & MASK32
            self._updates += 2
        elif kind is Kind.RMMOVL:
            self.write_word(r[instr.rb] + instr.value, r[instr.ra])
            self.eip = (self.eip + length) & MASK32
            self._updates += 1
        elif kind is Kind.CALL:
            sp = (r[ESP] - 4) & MASK32
            r[ESP] = sp
            self.write_word(sp, (self.eip + length) & MASK32)
            self.eip = instr.value
            self._updates += 2
        elif kind is Kind.RET:
            sp = r[ESP]
            self.eip = self.read_word(sp)
            r[ESP] = (sp + 4) & MASK32
            self._updates += 2
        elif kind is Kind.PUSHL:
            sp = (r[ESP] - 4) & MASK32
            r[ESP] = sp
            self.write_word(sp, r[instr.ra])
            self.eip = (self.eip + length) & MASK32
            self._updates += 2
        elif kind is Kind.POPL:
            sp = r[ESP]
            value = self.read_word(sp)
            r[ESP] = (sp + 4) & MASK32
            r[instr.ra] = value
            self.eip = (self.eip + length) & MASK32
            self._updates += 3
        elif kind is Kind.NOP:
            self.eip = (self.eip + length) & MASK32
            self._updates += 1
        else:  # HALT: eip stays at the halt instruction
            self.status = Status.HLT
            self._updates += 1

    def run(self, n: int, trace=None) -> int:
        """Step until `n` steps are consumed or status leaves AOK.

        Returns the number of steps consumed.  `trace`, when given, is
        called with one formatted line per consumed step.
        """
        if n < 0:
            raise ValueError("step budget must be a natural number")
        consumed = 0
        if trace is None:
            step = self.step
            while consumed < n and self.status is Status.AOK:
                step()
                consumed += 1
        else:
            while consumed < n and self.status is Status.AOK:
                eip0 = self.eip
                self.step()
                consumed += 1
                trace(self.trace_line(consumed, eip0))
        return consumed

    def trace_line(self, k: int, eip0: int | None = None) -> str:
        if eip0 is None:
            eip0 = self.eip
        entry = self._icache.get(eip0)
        text = format_instruction(entry[0]) if entry else "(invalid)"
        regs = " ".join(f"{v:08x}" for v in self.regs)
        return (f"step={k} eip={eip0:#010x} instr={text} regs={regs} "
                f"flags={self.zf}{self.sf}{self.of} status={self.status.value}")

    # -- lifecycle -----------------------------------------------------------

    def copy(self) -> "Machine":
        """Independent machine with equal state (sparse memory is shared)."""
        new = object.__new__(Machine)
        new.regs = list(self.regs)
        new.eip = self.eip
        new.zf, new.sf, new.of = self.zf, self.sf, self.of
        new.status = self.status
        new.mem = self.mem.copy()
        new._updates = self._updates
        new._last_update = self._last_update
        new.icache_clears = self.icache_clears
        new._icache = dict(self._icache)
        new._icache_addrs = set(self._icache_addrs)
        new._writes_since_reload = set(self._writes_since_reload)
        new._writes_overflow = self._writes_overflow
        return new

    def reload(self, mem, *, eip=0, esp=None, flags=None, status=None,
               keep_icache=False) -> None:
        """Reset registers/flags/status and replace the memory.

        With `keep_icache=True` the caller asserts that `mem` holds the
        same bytes at all cached instruction addresses as the memory
        supplied at the previous reload (e.g. the same immutable base
        image); the cache is still dropped if any write since then touched
        a cached address.
        """
        if keep_icache:
            if (self._writes_overflow
                    or not self._writes_since_reload.isdisjoint(self._icache_addrs)):
                self._icache.clear()
                self._icache_addrs.clear()
                self.icache_clears += 1
        else:
            self._icache.clear()
            self._icache_addrs.clear()
        self._writes_since_reload.clear()
        self._writes_overflow = False
        self.mem = mem
        for i in range(8):
            self.regs[i] = 0
        if esp is not None:
            self.regs[ESP] = esp
        self.eip = eip
        if flags is None:
            self.zf = self.sf = self.of = 0
        else:
            self.zf, self.sf, self.of = flags.zf, flags.sf, flags.of
        self.status = Status.AOK if status is None else status

    def __repr__(self) -> str:
        return (f"Machine(eip={self.eip:#x}, status={self.status.value}, "
                f"mem={self.mem!r})")


# ---------------------------------------------------------------------------
# differential execution of two backends

@dataclass(frozen=True)
class LockstepReport:
    steps: int
    addresses_checked: int


def _check_agreement(concrete, abstract, addr_iter, step):
    count = 0
    for addr in addr_iter:
        got, want = concrete.read_byte(addr), abstract.read_byte(addr)
        if got != want:
            raise CorrespondenceFailure(
                f"memories disagree at {addr:#x} after step {step}: "
                f"concrete {got} vs abstract {want}")
        count += 1
    return count


def run_in_lockstep(concrete: Machine, abstract: Machine, n: int, *,
                    seed: int = 0, sample: int = 32,
                    touched_cap: int = 256) -> LockstepReport:
    """Step two machines together, checking agreement after every step.

    `abstract` must use a sparse backend (its touched set drives the
    memory comparison); additionally `sample` random addresses are probed
    each step.  Raises CorrespondenceFailure on the first divergence.
    """
    if not hasattr(abstract.mem, "touched"):
        raise TypeError("abstract machine must use a sparse memory backend")
    rng = random.Random(seed)
    checked = 0
    steps = 0
    while steps < n and abstract.status is Status.AOK:
        concrete.step()
        abstract.step()
        steps += 1
        if (concrete.regs != abstract.regs
                or concrete.eip != abstract.eip
                or (concrete.zf, concrete.sf, concrete.of)
                != (abstract.zf, abstract.sf, abstract.of)
                or concrete.status is not abstract.status):
            raise CorrespondenceFailure(
                f"machine state diverged at step {steps}: "
                f"concrete eip={concrete.eip:#x}/{concrete.status.value} vs "
                f"abstract eip={abstract.eip:#x}/{abstract.status.value}")
        touched = abstract.mem.touched()
        if len(touched) > touched_cap:
            ordered = sorted(touched)
            stride = len(ordered) // touched_cap
            probe = ordered[::stride]
        else:
            probe = touched
        checked += _check_agreement(concrete, abstract, probe, steps)
        checked += _check_agreement(
            concrete, abstract,
            (rng.getrandbits(32) for _ in range(sample)), steps)
    # Final full sweep over every touched address.
    checked += _check_agreement(
        concrete, abstract, sorted(abstract.mem.touched()), steps)
    return LockstepReport(steps=steps, addresses_checked=checked)
