"""Evaluation metrics for a detector's output against ground truth."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import AbstractSet

from .model import Prefix


class UndefinedMetricError(ValueError):
    """Raised when a metric's denominator set is empty."""


def accuracy(output_set: AbstractSet[Prefix], truth_beta: AbstractSet[Prefix]) -> float:
    """Fraction of the ground-truth heavy prefixes that were output."""
    if not truth_beta:
        raise UndefinedMetricError("ground-truth set is empty")
    return len(output_set & truth_beta) / len(truth_beta)


def false_positive_rate(
    output_set: AbstractSet[Prefix], truth_alpha: AbstractSet[Prefix]
) -> float:
    """Output prefixes outside the alpha-level truth set, relative to that
    set's size; can exceed 1 by construction."""
    if not truth_alpha:
        raise UndefinedMetricError("alpha-level truth set is empty")
    return len(output_set - truth_alpha) / len(truth_alpha)


def communication_overhead(report_count: int, stream_length: int) -> float:
    """Reports sent (eviction plus flush) per packet of the stream."""
    if stream_length <= 0:
        raise ValueError("stream_length must be positive")
    return report_count / stream_length


@dataclass(frozen=True)
class EvalResult:
    accuracy: float
    false_positive_rate: float
    communication_overhead: float
    seed: int
    params: dict = field(default_factory=dict)
