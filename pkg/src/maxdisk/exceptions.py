"""Exception hierarchy.

Every error names the failed precondition or certificate so callers (and the
CLI exit-code contract) can branch on type rather than message text.
"""

from __future__ import annotations


class MaxDiskError(Exception):
    """Base class for all package errors."""


class PreconditionError(MaxDiskError, ValueError):
    pass


# lorentz
class NotOnH2(PreconditionError):
    pass


class NotTimelikeUp(PreconditionError):
    pass


class SingularFrame(MaxDiskError):
    pass


class InvalidFrame(PreconditionError):
    pass


# shells
class NotInE(PreconditionError):
    pass


class BadShellOrder(PreconditionError):
    pass


class EmptyInput(PreconditionError):
    pass


# analytic
class NearPole(MaxDiskError):
    pass


class PoleOnPath(MaxDiskError):
    pass


class ToleranceNotMet(MaxDiskError):
    pass


class DegreeCapExceeded(MaxDiskError):
    pass


# weierstrass
class DegenerateData(MaxDiskError):
    pass


class ZeroOfH(MaxDiskError):
    pass


class NoPath(MaxDiskError):
    pass


# planar domain
class Disconnected(MaxDiskError):
    pass


class BasepointOutside(PreconditionError):
    pass


class NoRoom(MaxDiskError):
    pass


class CertFailed(MaxDiskError):
    def __init__(self, prop: str, detail: str = ""):
        self.prop = prop
        super().__init__(f"{prop}: {detail}" if detail else prop)


# lemma / theorem
class PropertyFailed(CertFailed):
    pass


class KUnderflow(MaxDiskError):
    pass


class EscalationCapExceeded(MaxDiskError):
    pass


class UnderflowDelta(MaxDiskError):
    pass


class NoEnclosingContour(MaxDiskError):
    pass


class InputRejected(PreconditionError):
    pass


class RetriesExhausted(MaxDiskError):
    def __init__(self, message: str, history=None, trace=None):
        super().__init__(message)
        self.history = list(history or [])
        self.trace = trace


class MetricConditionStalled(MaxDiskError):
    pass


class SeedInfeasible(PreconditionError):
    pass


class ConfigInvalid(PreconditionError):
    pass


class IOFailure(MaxDiskError, OSError):
    pass
