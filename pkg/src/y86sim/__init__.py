"""Y86 simulator with paged and sparse memory backends kept in lockstep."""

from .errors import Y86Error
from .isa import AluFn, Cond, Flags, Instruction, Kind, Register, Status
from .machine import Machine, run_in_lockstep
from .mem_paged import PagedMemory
from .mem_sparse import SparseMemory

__version__ = "0.1.0"

__all__ = [
    "Y86Error", "AluFn", "Cond", "Flags", "Instruction", "Kind", "Register",
    "Status", "Machine", "run_in_lockstep", "PagedMemory", "SparseMemory",
    "__version__",
]
