"""Margin-carrying check records.

Every inequality is stored as (name, tag, constant, margin, resolution,
passed) where ``margin`` is positive exactly when the inequality holds.  The
``verify`` path recomputes ``passed`` from the margin, so a tampered record
is caught.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

from .exceptions import CertFailed


@dataclass(frozen=True)
class Check:
    name: str
    tag: str
    constant: str
    margin: float
    resolution: float | None = None
    passed: bool | None = None
    detail: str = ""

    def __post_init__(self):
        m = float(self.margin)
        object.__setattr__(self, "margin", m)
        if self.passed is None:
            object.__setattr__(self, "passed", bool(m > 0))

    def consistent(self) -> bool:
        return self.passed == bool(self.margin > 0)

    def to_dict(self) -> dict:
        d = asdict(self)
        if not math.isfinite(d["margin"]):
            d["margin"] = repr(d["margin"])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Check":
        d = dict(d)
        m = d["margin"]
        d["margin"] = float(m)
        return cls(**d)


def upper(name, tag, constant, value, bound, resolution=None, detail="") -> Check:
    """Check value < bound."""
    return Check(name, tag, constant, float(bound) - float(value), resolution, detail=detail)


def lower(name, tag, constant, value, bound, resolution=None, detail="") -> Check:
    """Check value > bound."""
    return Check(name, tag, constant, float(value) - float(bound), resolution, detail=detail)


def flag(name, tag, constant, ok: bool, resolution=None, detail="") -> Check:
    """Structural yes/no check, margin +1 / -1."""
    return Check(name, tag, constant, 1.0 if ok else -1.0, resolution, detail=detail)


@dataclass
class CertificateLog:
    """Append-only list of checks."""

    checks: list[Check] = field(default_factory=list)

    def add(self, check: Check) -> Check:
        self.checks.append(check)
        return check

    def extend(self, checks):
        for c in checks:
            self.add(c)

    def __iter__(self):
        return iter(self.checks)

    def __len__(self):
        return len(self.checks)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    def by_name(self, name: str) -> list[Check]:
        return [c for c in self.checks if c.name == name]

    def min_margin(self, prefix: str = "") -> float:
        ms = [c.margin for c in self.checks if c.name.startswith(prefix)]
        return min(ms) if ms else math.inf

    def require(self, prefix: str = "", exc=CertFailed):
        """Raise on the first failing check whose name starts with prefix."""
        for c in self.checks:
            if c.name.startswith(prefix) and not c.passed:
                raise exc(c.name, f"margin {c.margin:.3g} ({c.constant}) {c.detail}")

    def to_list(self) -> list[dict]:
        return [c.to_dict() for c in self.checks]

    @classmethod
    def from_list(cls, items) -> "CertificateLog":
        return cls([Check.from_dict(d) for d in items])
