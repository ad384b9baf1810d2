"""Pure alignment-parameter algebra: composition, merging and drop counts.

Composition adds a processor's relative counters to the cumulative
counters of its merged input; merging takes the component-wise maximum so
only regions valid in every incoming representation stay valid.  The drop
counts translate cumulative counters into slice bounds for the three
merge scenarios.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .chunks import MAX_COUNTER, AlignmentParams
from .errors import CounterOverflow, EmptyInput, InconsistentParams


@dataclass(frozen=True, slots=True)
class DropCounts:
    """Slice bounds derived for one incoming chunk at one merge event.

    d_H: columns dropped at the end (high side) of the incoming array.
    d_L: extra columns dropped at the start of a discontinuous chunk.
    d_l: columns dropped at the start of a continuous chunk that is
         merged into a discontinuous result.
    """

    d_H: int
    d_L: int
    d_l: int


def _checked(value: int, name: str) -> int:
    if value > MAX_COUNTER:
        raise CounterOverflow(f"alignment counter {name} overflows: {value}")
    return value


def compose(merged: AlignmentParams, feature: AlignmentParams) -> AlignmentParams:
    """Cumulative counters of an outgoing chunk: component-wise sum."""
    return AlignmentParams(
        p=_checked(merged.p + feature.p, "p"),
        d=_checked(merged.d + feature.d, "d"),
        l=_checked(merged.l + feature.l, "l"),
        s=_checked(merged.s + feature.s, "s"),
    )


def merge_params(inputs: Sequence[AlignmentParams]) -> AlignmentParams:
    """Counters of a merged chunk: component-wise maximum over the set."""
    if not inputs:
        raise EmptyInput("merge_params needs at least one input")
    return AlignmentParams(
        p=max(a.p for a in inputs),
        d=max(a.d for a in inputs),
        l=max(a.l for a in inputs),
        s=max(a.s for a in inputs),
    )


def drop_counts(merged: AlignmentParams, chunk: AlignmentParams) -> DropCounts:
    """Slice bounds for one incoming chunk given the merged counters.

    Requires that merged dominates chunk in p and d, which holds whenever
    merged was produced by merge_params over a set containing chunk.
    """
    if merged.p < chunk.p or merged.d < chunk.d:
        raise InconsistentParams(
            f"merged params {merged.as_tuple()} do not dominate "
            f"chunk params {chunk.as_tuple()}"
        )
    return DropCounts(
        d_H=merged.p - chunk.p,
        d_L=merged.d - chunk.d,
        d_l=_checked(merged.d + chunk.p, "d_l"),
    )
