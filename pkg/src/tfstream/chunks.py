"""Chunk model: alignment metadata, continuity flags and the DataChunk.

Every representation travelling through the pipeline is wrapped in a
DataChunk: a numbered, flagged array (channels x time, or plain time)
plus the four alignment counters that make re-alignment possible.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum, IntEnum
from typing import Optional, Tuple

import numpy as np

from .errors import MetadataError, ShapeError, TooShortError

#: Hard cap on alignment counters; silent wraparound would corrupt slicing.
MAX_COUNTER = 2**31 - 1

SourceKey = Tuple[str, str]


class Continuity(IntEnum):
    """Per-chunk code declaring the relation to the predecessor chunk.

    The numeric values are part of the wire format; the mapping is
    one-to-one and must stay in numerical order.
    """

    INVALID = -1
    DISCONTINUOUS = 0
    NEWFILE = 1
    CALIBRATION = 2
    WITHPREVIOUS = 10
    LAST = 11


_DISCONTINUOUS_SUBTYPES = frozenset(
    {Continuity.DISCONTINUOUS, Continuity.NEWFILE, Continuity.CALIBRATION}
)
_WITHPREVIOUS_SUBTYPES = frozenset({Continuity.WITHPREVIOUS, Continuity.LAST})


def is_discontinuous_subtype(code: Continuity) -> bool:
    """True for codes that declare a break with the predecessor (0, 1, 2)."""
    return Continuity(code) in _DISCONTINUOUS_SUBTYPES


def is_withprevious_subtype(code: Continuity) -> bool:
    """True for codes continuous with the predecessor (10, 11)."""
    return Continuity(code) in _WITHPREVIOUS_SUBTYPES


class MergeScenario(Enum):
    """The three sanctioned ways to slice an incoming array into a merge."""

    REGULAR_CONTINUOUS = "regular_continuous"
    REGULAR_DISCONTINUOUS = "regular_discontinuous"
    IRREGULAR_DISCONTINUOUS = "irregular_discontinuous"


@dataclass(frozen=True, slots=True)
class AlignmentParams:
    """The four alignment counters.

    p: included past -- time steps from the future needed per value
       (non-causal part), so the representation lags the timeline by p.
    d: dropped after discontinuity -- time steps from the past needed per
       value (causal part), dropped at the start after any discontinuity.
    l: invalid large-scale (low frequency) channels at the array edge.
    s: invalid small-scale (high frequency) channels at the array edge.

    Carried in cumulative form on chunks, in relative form on processors.
    """

    p: int = 0
    d: int = 0
    l: int = 0
    s: int = 0

    def __post_init__(self) -> None:
        for name in ("p", "d", "l", "s"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)):
                raise MetadataError(f"alignment counter {name} must be an integer")
            if value < 0:
                raise MetadataError(f"alignment counter {name} is negative: {value}")
            if value > MAX_COUNTER:
                raise MetadataError(f"alignment counter {name} exceeds {MAX_COUNTER}")

    def as_tuple(self) -> Tuple[int, int, int, int]:
        return (self.p, self.d, self.l, self.s)


ZERO_ALIGNMENT = AlignmentParams(0, 0, 0, 0)


@dataclass(frozen=True, slots=True)
class DataChunk:
    """A numbered, flagged segment of a (time-frequency) representation.

    payload is (channels, time) or (time,); the time axis is always last.
    Chunks are immutable after publication and safe to share between
    workers; the runtime freezes the payload when publishing.
    """

    number: int
    source_key: SourceKey
    payload: np.ndarray
    sample_rate: float
    alignment: AlignmentParams
    continuity: Continuity
    channel_freqs: Optional[np.ndarray] = None

    @property
    def time_length(self) -> int:
        return self.payload.shape[-1]

    @property
    def channels(self) -> int:
        return self.payload.shape[0] if self.payload.ndim == 2 else 1

    def with_payload(self, payload: np.ndarray, **changes) -> "DataChunk":
        return replace(self, payload=payload, **changes)


def validate_chunk(chunk: DataChunk) -> DataChunk:
    """Check all DataChunk invariants; return the chunk unchanged.

    Idempotent: validating an already valid chunk is a no-op.
    """
    if chunk.payload.ndim not in (1, 2):
        raise ShapeError(f"payload must be 1-D or 2-D, got ndim={chunk.payload.ndim}")
    if chunk.time_length < 1:
        raise ShapeError("payload time-length must be >= 1")
    try:
        Continuity(chunk.continuity)
    except ValueError:
        raise MetadataError(f"unknown continuity code {chunk.continuity!r}") from None
    if chunk.number < 0:
        raise MetadataError(f"chunk number is negative: {chunk.number}")
    a = chunk.alignment
    for name, value in zip("pdls", a.as_tuple()):
        if value < 0:
            raise MetadataError(f"alignment counter {name} is negative: {value}")
    if chunk.channel_freqs is not None:
        if chunk.payload.ndim != 2:
            raise ShapeError("channel_freqs given for a 1-D payload")
        freqs = np.asarray(chunk.channel_freqs)
        if freqs.shape != (chunk.channels,):
            raise ShapeError(
                f"channel_freqs length {freqs.shape} does not match "
                f"{chunk.channels} channels"
            )
        diffs = np.diff(freqs)
        if not (np.all(diffs > 0) or np.all(diffs < 0)):
            raise ShapeError("channel_freqs must be strictly monotone")
    # Note: cumulative d + p may legitimately exceed the length of a
    # single chunk (short final chunks of a continuous stream); whether
    # the counters fit the canonical chunk interval is a configuration
    # property, checked once per pipeline, not per chunk.
    return chunk


def check_publishable(chunk: DataChunk) -> DataChunk:
    """Reject invalid chunks at a publish boundary; they stay unpublished."""
    if Continuity(chunk.continuity) is Continuity.INVALID:
        raise MetadataError("invalid chunks (code -1) are never published")
    return validate_chunk(chunk)
