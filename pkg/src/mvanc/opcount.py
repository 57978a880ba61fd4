"""Opt-in arithmetic tallies for the streaming kernels.

Kernels call :func:`tally` with the number of multiplications and additions
they perform.  Nothing is recorded unless a :func:`counting` block is active
in the current context, so the overhead in normal runs is one context-var
lookup per kernel call.
"""

from __future__ import annotations

import contextlib
import contextvars
from collections import defaultdict
from dataclasses import dataclass


@dataclass(frozen=True)
class OpCount:
    multiplications: int = 0
    additions: int = 0

    def __post_init__(self):
        if self.multiplications < 0 or self.additions < 0:
            raise ValueError("operation counts must be non-negative")

    def __add__(self, other: "OpCount") -> "OpCount":
        return OpCount(self.multiplications + other.multiplications,
                       self.additions + other.additions)

    def __sub__(self, other: "OpCount") -> tuple[int, int]:
        # signed difference; not an OpCount since it may be negative
        return (self.multiplications - other.multiplications,
                self.additions - other.additions)


class OpCounter:
    """Per-kernel multiply/add tallies."""

    def __init__(self):
        self._mults = defaultdict(int)
        self._adds = defaultdict(int)

    def add(self, kernel: str, mults: int, adds: int) -> None:
        self._mults[kernel] += mults
        self._adds[kernel] += adds

    def by_kernel(self) -> dict[str, OpCount]:
        return {k: OpCount(self._mults[k], self._adds[k]) for k in self._mults}

    def total(self) -> OpCount:
        return OpCount(sum(self._mults.values()), sum(self._adds.values()))


_active: contextvars.ContextVar[OpCounter | None] = contextvars.ContextVar(
    "mvanc_op_counter", default=None)


@contextlib.contextmanager
def counting():
    """Record kernel arithmetic issued inside the block."""
    counter = OpCounter()
    token = _active.set(counter)
    try:
        yield counter
    finally:
        _active.reset(token)


def tally(kernel: str, mults: int, adds: int) -> None:
    counter = _active.get()
    if counter is not None:
        counter.add(kernel, mults, adds)
