"""Counters proving the per-packet memory access budget of the detectors."""

from __future__ import annotations


class AccessMeter:
    """Tracks slot reads/writes and the maximum distinct slots touched while
    handling a single packet."""

    __slots__ = ("reads", "writes", "max_distinct_per_packet", "max_writes_per_packet", "_touched", "_writes_now")

    def __init__(self) -> None:
        self.reads = 0
        self.writes = 0
        self.max_distinct_per_packet = 0
        self.max_writes_per_packet = 0
        self._touched: set[tuple[int, int]] = set()
        self._writes_now = 0

    def begin_packet(self) -> None:
        self._touched.clear()
        self._writes_now = 0

    def read(self, stage: int, idx: int) -> None:
        self.reads += 1
        self._touched.add((stage, idx))

    def write(self, stage: int, idx: int) -> None:
        self.writes += 1
        self._writes_now += 1
        self._touched.add((stage, idx))

    def end_packet(self) -> None:
        if len(self._touched) > self.max_distinct_per_packet:
            self.max_distinct_per_packet = len(self._touched)
        if self._writes_now > self.max_writes_per_packet:
            self.max_writes_per_packet = self._writes_now
