"""Control-plane aggregation of detector reports.

Keeps one running tally per reported prefix and applies the output rule at
the end of the interval.  ``COUNT_ONLY`` outputs a prefix once enough
packets were reported for it (arrival of a report already signals
reordering, since the default array only reports on reorder-triggered
evictions).  ``FRACTION`` additionally requires the aggregated out-of-order
fraction to clear a scaled threshold; paired with ``report_all`` it trades
communication volume for fewer false positives.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .model import Prefix
from .reports import Report


class AggregatorMode(Enum):
    COUNT_ONLY = "count"
    FRACTION = "fraction"


@dataclass(frozen=True)
class AggregatorParams:
    min_packets: int = 16       # alpha
    eps: float = 0.01
    scale: float = 1.0          # c, compensates for partial monitoring
    mode: AggregatorMode = AggregatorMode.COUNT_ONLY

    def __post_init__(self) -> None:
        if self.min_packets < 1:
            raise ValueError("min_packets must be >= 1")
        if not 0.0 < self.scale <= 1.0:
            raise ValueError("scale must lie in (0, 1]")


@dataclass(slots=True)
class PrefixTally:
    prefix: Prefix
    sum_n: int = 0
    sum_o: int = 0
    report_count: int = 0


class ReportAggregator:
    def __init__(self) -> None:
        self._tallies: dict[Prefix, PrefixTally] = {}
        self.report_count = 0

    def ingest(self, report: Report) -> None:
        tally = self._tallies.get(report.prefix)
        if tally is None:
            tally = PrefixTally(report.prefix)
            self._tallies[report.prefix] = tally
        tally.sum_n += report.n
        tally.sum_o += report.o
        tally.report_count += 1
        self.report_count += 1

    def ingest_all(self, reports) -> None:
        for report in reports:
            self.ingest(report)

    def tallies(self) -> dict[Prefix, PrefixTally]:
        return dict(self._tallies)

    def finalize(self, params: AggregatorParams) -> set[Prefix]:
        """The output set; a pure function of the tallies."""
        out: set[Prefix] = set()
        for prefix, tally in self._tallies.items():
            if tally.sum_n < params.min_packets:
                continue
            if params.mode is AggregatorMode.FRACTION:
                if tally.sum_o / tally.sum_n <= params.scale * params.eps:
                    continue
            out.add(prefix)
        return out
