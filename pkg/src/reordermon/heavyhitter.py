"""Multi-stage heavy-hitter table that also tracks reordering.

A d-stage hash table with randomized admission: a new flow replaces the
minimum-count entry among its d candidate slots with probability
1/(min_count + 1), so heavy flows survive while the mass of tiny flows
mostly bounces off.  Entries are indexed by the flow's 24-bit source
prefix (not the flow id), which caps any one prefix at d resident flows.
Each entry carries the same sequence state and counters as the sampling
array, so heavy flows are monitored continuously for reordering.

Reports fire when an entry with enough observed packets has an
out-of-order fraction above the threshold, both on replacement of such an
entry and at the end-of-interval flush (sources tag which).
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Optional

from .hashing import bucket_index, stage_seed
from .instrumentation import AccessMeter
from .model import (
    DETECTOR_DEFS,
    FlowId,
    PacketRecord,
    Prefix,
    ReorderDef,
    SeqState,
    advance_state,
    initial_state,
    is_out_of_order,
    prefix_of,
)
from .reports import Report, ReportSource


@dataclass(frozen=True)
class HHParams:
    n_stages: int
    buckets_per_stage: int
    report_fraction: float = 0.01
    min_report_packets: int = 16
    reorder_def: ReorderDef = ReorderDef.DEF1_DECREASE
    hash_seed: int = 0
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.n_stages < 1:
            raise ValueError("n_stages must be >= 1")
        if self.buckets_per_stage < 1:
            raise ValueError("buckets_per_stage must be >= 1")
        if not 0.0 < self.report_fraction < 1.0:
            raise ValueError("report_fraction must lie in (0, 1)")
        if self.min_report_packets < 1:
            raise ValueError("min_report_packets must be >= 1")
        if self.reorder_def not in DETECTOR_DEFS:
            raise ValueError("online detectors support DEF1 and DEF2 only")


@dataclass(slots=True)
class HHEntry:
    flow: FlowId
    count_est: int
    seq_state: SeqState
    n: int
    o: int


class ReorderHeavyHitter:
    """d-stage table; at most d probes and one write per packet."""

    def __init__(self, params: HHParams) -> None:
        self.params = params
        self._stages: list[list[Optional[HHEntry]]] = [
            [None] * params.buckets_per_stage for _ in range(params.n_stages)
        ]
        self._seeds = [stage_seed(params.hash_seed, i) for i in range(params.n_stages)]
        self._rng = random.Random(params.rng_seed)
        self.meter = AccessMeter()
        self.packets_processed = 0

    def _slots(self, prefix_bits: int) -> list[int]:
        return [
            bucket_index(prefix_bits, seed, self.params.buckets_per_stage)
            for seed in self._seeds
        ]

    def _should_report(self, entry: HHEntry) -> bool:
        p = self.params
        return entry.n >= p.min_report_packets and entry.o / entry.n > p.report_fraction

    def process_packet(self, pkt: PacketRecord) -> tuple[bool, Optional[Report]]:
        """Returns (resident after this packet, optional eviction report)."""
        p = self.params
        self.packets_processed += 1
        self.meter.begin_packet()
        idxs = self._slots(prefix_of(pkt.flow).bits)

        min_stage = 0
        min_count = -1
        for stage, idx in enumerate(idxs):
            self.meter.read(stage, idx)
            entry = self._stages[stage][idx]
            if entry is not None and entry.flow == pkt.flow:
                if is_out_of_order(entry.seq_state, pkt, p.reorder_def):
                    entry.o += 1
                advance_state(entry.seq_state, pkt)
                entry.n += 1
                entry.count_est += 1
                self.meter.write(stage, idx)
                self.meter.end_packet()
                return True, None
            count = 0 if entry is None else entry.count_est
            if min_count < 0 or count < min_count:
                min_count = count
                min_stage = stage

        # randomized admission against the lightest candidate entry
        report: Optional[Report] = None
        resident = self._rng.random() < 1.0 / (min_count + 1)
        if resident:
            idx = idxs[min_stage]
            victim = self._stages[min_stage][idx]
            if victim is not None and self._should_report(victim):
                report = Report(
                    prefix_of(victim.flow), victim.n, victim.o, ReportSource.HH_EVICTION
                )
            self._stages[min_stage][idx] = HHEntry(
                pkt.flow, min_count + 1, initial_state(pkt), 0, 0
            )
            self.meter.write(min_stage, idx)
        self.meter.end_packet()
        return resident, report

    def flush(self) -> list[Report]:
        out: list[Report] = []
        for stage in self._stages:
            for idx, entry in enumerate(stage):
                if entry is None:
                    continue
                if self._should_report(entry):
                    out.append(
                        Report(prefix_of(entry.flow), entry.n, entry.o, ReportSource.HH_FLUSH)
                    )
                stage[idx] = None
        return out

    def contains(self, flow: FlowId) -> bool:
        """Whether ``flow`` is currently resident in any stage."""
        for stage, idx in enumerate(self._slots(prefix_of(flow).bits)):
            entry = self._stages[stage][idx]
            if entry is not None and entry.flow == flow:
                return True
        return False

    def contains_prefix(self, prefix: Prefix) -> bool:
        """Whether any flow of ``prefix`` is currently resident."""
        for stage, idx in enumerate(self._slots(prefix.bits)):
            entry = self._stages[stage][idx]
            if entry is not None and prefix_of(entry.flow) == prefix:
                return True
        return False

    def occupied_entries(self) -> int:
        return sum(1 for stage in self._stages for entry in stage if entry is not None)

    def resident_flows(self) -> list[FlowId]:
        return [entry.flow for stage in self._stages for entry in stage if entry is not None]
