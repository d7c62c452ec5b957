"""Multiply-add accounting for the layer forward paths.

Counts are analytic (shape products), not sampled from hardware counters, so
they are exact and deterministic.  Disabled by default; the benchmark and the
complexity tests enable them around measured regions.
"""

from __future__ import annotations

from contextlib import contextmanager


class MaddCounter:
    __slots__ = ("enabled", "total")

    def __init__(self):
        self.enabled = False
        self.total = 0

    def add(self, n: int) -> None:
        if self.enabled:
            self.total += int(n)

    def reset(self) -> None:
        self.total = 0


madds = MaddCounter()


@contextmanager
def counting():
    """Enable and zero the counter for the enclosed block.

    The block's total stays readable on the yielded counter after exit; if an
    outer block was already counting, the inner total folds into it.
    """
    prev_enabled, prev_total = madds.enabled, madds.total
    madds.enabled = True
    madds.total = 0
    try:
        yield madds
    finally:
        madds.enabled = prev_enabled
        if prev_enabled:
            madds.total += prev_total
