"""Exception types used across the simulator."""

__all__ = [
    "Y86Error",
    "InvalidInstruction",
    "AddressOutOfRange",
    "ValueOutOfRange",
    "AllocationFailure",
    "PageTableFull",
    "ParseError",
    "UnresolvedLabel",
    "BackwardPos",
    "AddressOverflow",
    "LockstepError",
    "GuardViolation",
    "PoisonedState",
    "CorrespondenceFailure",
    "PreservationFailure",
    "AtomicityViolation",
    "InjectedFault",
]


class Y86Error(Exception):
    """Base class for all simulator errors."""


class InvalidInstruction(Y86Error):
    """Byte sequence does not encode a defined instruction."""


class AddressOutOfRange(Y86Error):
    """Memory address outside the 32-bit address space."""


class ValueOutOfRange(Y86Error):
    """Stored value outside the byte range 0..255."""


class AllocationFailure(Y86Error):
    """The host could not provide backing storage."""


class PageTableFull(Y86Error):
    """No free block slot left in the page table."""


class ParseError(Y86Error):
    """Malformed assembler source."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(message if line is None else f"line {line}: {message}")


class UnresolvedLabel(Y86Error):
    """An operand refers to a label that is never defined."""


class BackwardPos(Y86Error):
    """A position directive would overlap already emitted bytes."""


class AddressOverflow(Y86Error):
    """The location counter ran past the 32-bit address space."""


class LockstepError(Y86Error):
    """Base class for dual-state protocol errors."""


class GuardViolation(LockstepError):
    """An export was invoked with arguments its guard rejects."""


class PoisonedState(LockstepError):
    """The dual state was abandoned mid-update and is unusable."""


class CorrespondenceFailure(LockstepError):
    """Concrete and abstract representations disagree."""


class PreservationFailure(LockstepError):
    """An update produced an abstract value the recognizer rejects."""


class AtomicityViolation(LockstepError):
    """An unprotected export performed more than one concrete update."""


class InjectedFault(Y86Error):
    """Deliberate mid-update abort used by test fixtures."""
