"""Structured refusals shared by the processor modules.

A refusal is a definite negative answer with a reason (mode restriction,
violated precondition, failed soundness gate).  It is distinct from a
processor merely failing to make progress, which callers signal with None.
"""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class Refusal:
    processor: str
    reason: str
    details: tuple[tuple[str, str], ...] = ()

    @staticmethod
    def of(processor: str, reason: str, **details: object) -> "Refusal":
        return Refusal(processor, reason, tuple((k, str(v)) for k, v in details.items()))

    def __str__(self):
        extra = ", ".join(f"{k}={v}" for k, v in self.details)
        return f"{self.processor}: {self.reason}" + (f" ({extra})" if extra else "")
