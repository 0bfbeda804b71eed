"""Exception types shared by all modules."""

from __future__ import annotations


class RotCocycleError(Exception):
    """Base class for library errors."""


class PrecisionExhausted(RotCocycleError):
    """An adaptive evaluation hit its refinement cap before the answer was certain."""


class UndecidableAtCap(RotCocycleError):
    """Two quantities could not be separated at the precision cap.

    Usually this means an exact relation between symbols exists but was not
    declared when the symbols were registered.
    """

    def __init__(self, message: str, lhs=None, rhs=None):
        super().__init__(message)
        self.lhs = lhs
        self.rhs = rhs


class AuditFailure(RotCocycleError):
    """An identity that must hold exactly was found violated."""

    def __init__(self, message: str, witness=None):
        super().__init__(message)
        self.witness = witness


class EmptyPartition(RotCocycleError):
    """A step cocycle was given pieces that do not cover the circle."""


class SubsequenceExhausted(RotCocycleError):
    """No index in the scanned range satisfied the required selection rule."""


class AtomSearchFailed(RotCocycleError):
    """No pair of heavy atoms with the required separation was found."""
