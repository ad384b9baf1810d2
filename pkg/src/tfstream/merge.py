"""Merge engine: continuity decision, scenario classification, array merge.

One MergeState lives per consuming processor.  For every completed set of
same-numbered chunks the engine decides the merged continuity, slices each
incoming array according to its scenario, and carries forward the column
tails needed by the next continuous merge.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Sequence, Tuple

import numpy as np

from .alignment import DropCounts, drop_counts, merge_params
from .chunks import (
    AlignmentParams,
    Continuity,
    DataChunk,
    MergeScenario,
    SourceKey,
    is_discontinuous_subtype,
    is_withprevious_subtype,
)
from .errors import (
    EmptyResult,
    InvalidInMerge,
    MissingTail,
    ProtocolError,
    ShapeMismatch,
)


@dataclass
class MergeState:
    """Per-consumer carry-over between consecutive merges.

    carried_tails maps each source key to the last d_H columns of the
    previously merged incoming array; these become the prepended past of
    the next regular continuous merge.
    """

    last_completed: Optional[int] = None
    carried_tails: Dict[SourceKey, np.ndarray] = field(default_factory=dict)


@dataclass(frozen=True)
class MergedChunk:
    """The aligned result of one completed set; all arrays share one
    time extent and one continuity."""

    number: int
    continuity: Continuity
    alignment: AlignmentParams
    payloads: Mapping[SourceKey, np.ndarray]
    scenarios: Mapping[SourceKey, MergeScenario]
    sample_rate: float
    channel_freqs: Mapping[SourceKey, Optional[np.ndarray]]

    @property
    def time_length(self) -> int:
        return next(iter(self.payloads.values())).shape[-1]


def decide_continuity(
    n: int,
    last_completed: Optional[int],
    incoming: Sequence[Continuity],
) -> Continuity:
    """Continuity subtype of the merged chunk.

    Discontinuous when the set does not directly follow the last
    completed set, or when any incoming chunk broke continuity itself;
    withprevious otherwise.
    """
    if not incoming:
        raise InvalidInMerge("empty incoming continuity list")
    for code in incoming:
        if Continuity(code) is Continuity.INVALID:
            raise InvalidInMerge("invalid chunk (code -1) in merge")
    if last_completed is None or n != last_completed + 1:
        return Continuity.DISCONTINUOUS
    if any(is_discontinuous_subtype(c) for c in incoming):
        return Continuity.DISCONTINUOUS
    return Continuity.WITHPREVIOUS


def classify_scenario(
    chunk_continuity: Continuity,
    merged_continuity: Continuity,
) -> MergeScenario:
    """Map an (incoming, merged) continuity pair onto its merge scenario."""
    for code in (chunk_continuity, merged_continuity):
        if Continuity(code) is Continuity.INVALID:
            raise InvalidInMerge("invalid chunk (code -1) in merge")
    chunk_cont = is_withprevious_subtype(chunk_continuity)
    merged_cont = is_withprevious_subtype(merged_continuity)
    if chunk_cont and merged_cont:
        return MergeScenario.REGULAR_CONTINUOUS
    if not chunk_cont and not merged_cont:
        return MergeScenario.REGULAR_DISCONTINUOUS
    if chunk_cont and not merged_cont:
        return MergeScenario.IRREGULAR_DISCONTINUOUS
    # A discontinuous chunk can never yield a withprevious merge under
    # decide_continuity; reaching this means corrupted state.
    raise ProtocolError(
        "discontinuous chunk inside a withprevious merge is impossible"
    )


def merge_array(
    scenario: MergeScenario,
    prev_tail: Optional[np.ndarray],
    current: np.ndarray,
    drops: DropCounts,
) -> np.ndarray:
    """Slice (and for continuous operation, concatenate) one incoming array.

    The time axis is last; 1-D time series follow the same rules with the
    frequency axis absent.
    """
    e = current.shape[-1]
    if scenario is MergeScenario.REGULAR_CONTINUOUS:
        if prev_tail is None or prev_tail.shape[-1] != drops.d_H:
            got = "none" if prev_tail is None else str(prev_tail.shape[-1])
            raise MissingTail(
                f"regular continuous merge needs a carried tail of "
                f"{drops.d_H} columns, got {got}"
            )
        head = current[..., : e - drops.d_H] if drops.d_H else current
        merged = np.concatenate([prev_tail, head], axis=-1) if drops.d_H else head
    elif scenario is MergeScenario.REGULAR_DISCONTINUOUS:
        merged = current[..., drops.d_L : e - drops.d_H]
    else:
        merged = current[..., drops.d_l : e - drops.d_H]
    if merged.shape[-1] <= 0:
        raise EmptyResult(
            f"merge produced a zero-length chunk (array length {e}, "
            f"drops {drops}); the chunk time interval is too short"
        )
    return merged


def _refine_continuity(
    subtype: Continuity, incoming: Sequence[Continuity]
) -> Continuity:
    """Preserve the special codes within the decided subtype family.

    Calibration and newfile travel downstream so consumers can react;
    last marks the final chunk of a file on every path.
    """
    codes = [Continuity(c) for c in incoming]
    if subtype is Continuity.DISCONTINUOUS:
        if any(c is Continuity.CALIBRATION for c in codes):
            return Continuity.CALIBRATION
        if all(c is Continuity.NEWFILE for c in codes):
            return Continuity.NEWFILE
        return Continuity.DISCONTINUOUS
    if any(c is Continuity.LAST for c in codes):
        return Continuity.LAST
    return Continuity.WITHPREVIOUS


def complete_merge(
    state: MergeState,
    chunk_set: Mapping[SourceKey, DataChunk],
    n: int,
) -> Tuple[MergedChunk, MergeState]:
    """Merge one completed set into a MergedChunk and advance the state.

    The fresh tails (last d_H columns of each incoming array) are always
    retained: a merge directly following a discontinuous one is regular
    continuous and needs them.
    """
    if not chunk_set:
        raise InvalidInMerge("empty chunk set")
    for chunk in chunk_set.values():
        if chunk.number != n:
            raise ProtocolError(
                f"chunk {chunk.source_key} has number {chunk.number}, "
                f"expected {n}"
            )
    merged_align = merge_params([c.alignment for c in chunk_set.values()])
    incoming = [c.continuity for c in chunk_set.values()]
    subtype = decide_continuity(n, state.last_completed, incoming)
    continuity = _refine_continuity(subtype, incoming)

    payloads: Dict[SourceKey, np.ndarray] = {}
    scenarios: Dict[SourceKey, MergeScenario] = {}
    tails: Dict[SourceKey, np.ndarray] = {}
    for key, chunk in chunk_set.items():
        drops = drop_counts(merged_align, chunk.alignment)
        scenario = classify_scenario(chunk.continuity, subtype)
        prev_tail = state.carried_tails.get(key)
        payloads[key] = merge_array(scenario, prev_tail, chunk.payload, drops)
        scenarios[key] = scenario
        # Copy, not a view: published chunks may be released by transport.
        if drops.d_H:
            tails[key] = chunk.payload[..., -drops.d_H :].copy()
        else:
            tails[key] = chunk.payload[..., :0].copy()

    lengths = {key: arr.shape[-1] for key, arr in payloads.items()}
    if len(set(lengths.values())) != 1:
        raise ShapeMismatch(f"merged arrays disagree in time extent: {lengths}")

    merged = MergedChunk(
        number=n,
        continuity=continuity,
        alignment=merged_align,
        payloads=payloads,
        scenarios=scenarios,
        sample_rate=next(iter(chunk_set.values())).sample_rate,
        channel_freqs={k: c.channel_freqs for k, c in chunk_set.items()},
    )
    return merged, MergeState(last_completed=n, carried_tails=tails)
