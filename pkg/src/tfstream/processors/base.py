"""Processor base classes, the kind registry and streaming-window state.

A transform processor consumes one merged chunk per time interval and
publishes one or more features, each with its own relative alignment
counters.  The time-window state keeps just enough input history that
chunked processing reproduces the unchunked computation exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, ClassVar, Dict, Iterator, Optional, Tuple, Type

import numpy as np

from ..chunks import AlignmentParams, DataChunk
from ..errors import EmptyResult, UnknownProcessorKind
from ..merge import MergedChunk


@dataclass
class FeatureData:
    """One published feature array plus its axis metadata."""

    payload: np.ndarray
    sample_rate: float
    channel_freqs: Optional[np.ndarray] = None


class Processor:
    """Base for transform processors (one merged input set, n features)."""

    kind: ClassVar[str] = ""

    def __init__(self, name: str, params: dict):
        self.name = name
        self.params = dict(params)
        #: "propagate" keeps quiet NaN in invalid scale rows; "zero"
        #: overwrites them on the receiving side before processing.
        self.nan_policy = self.params.get("nan_policy", "propagate")

    # --- static metadata used by graph validation ------------------------

    def feature_alignment(self) -> Dict[str, AlignmentParams]:
        """Relative alignment counters per published feature."""
        raise NotImplementedError

    def time_scale(self) -> float:
        """Output time steps per input time step (1.0 if rate-preserving)."""
        return 1.0

    def convert_alignment(self, merged: AlignmentParams) -> AlignmentParams:
        """Re-express incoming cumulative counters in output time steps.

        Identity for rate-preserving processors; a processor that changes
        the time scale must override this so counters keep counting steps
        of its own output stream.
        """
        return merged

    # --- streaming -------------------------------------------------------

    def process(self, merged: MergedChunk) -> Dict[str, FeatureData]:
        """Consume one merged chunk, return payloads per feature name."""
        raise NotImplementedError

    def reset(self) -> None:
        """Drop any carried state (called once before a run)."""


class SourceProcessor:
    """Base for input processors; they assign chunk numbers at ingress."""

    kind: ClassVar[str] = ""
    feature: ClassVar[str] = "snd"

    def __init__(self, name: str, params: dict):
        self.name = name
        self.params = dict(params)

    def chunks(self) -> Iterator[DataChunk]:
        raise NotImplementedError

    def sample_rate(self) -> float:
        raise NotImplementedError

    def chunk_size(self) -> int:
        raise NotImplementedError


class SinkProcessor:
    """Base for output processors; they consume chunks without merging."""

    kind: ClassVar[str] = ""

    def __init__(self, name: str, params: dict):
        self.name = name
        self.params = dict(params)

    def consume(self, chunk: DataChunk) -> None:
        raise NotImplementedError

    def close(self) -> None:
        pass


_REGISTRY: Dict[str, type] = {}


def register(cls: Type) -> Type:
    _REGISTRY[cls.kind] = cls
    return cls


def resolve_kind(kind: str) -> type:
    try:
        return _REGISTRY[kind]
    except KeyError:
        raise UnknownProcessorKind(f"unknown processor kind {kind!r}") from None


def registered_kinds() -> Tuple[str, ...]:
    return tuple(sorted(_REGISTRY))


class TimeWindowState:
    """Carried input history for a feature with declared counters (d, p).

    On a continuous chunk the last d + p input columns of the previous
    chunk are prepended, so every output position sees the identical
    window it would see in an unchunked run.  On a discontinuous chunk
    the state resets and the first d / last p positions are dropped.
    """

    def __init__(self, declared_d: int, declared_p: int):
        self.d = int(declared_d)
        self.p = int(declared_p)
        self.tail: Optional[np.ndarray] = None

    def reset(self) -> None:
        self.tail = None

    def feed(self, continuous: bool, x: np.ndarray) -> Tuple[np.ndarray, slice]:
        """Return (buffer, output slice into buffer positions)."""
        history = self.d + self.p
        if continuous and self.tail is not None:
            if self.tail.shape[-1] != history:
                raise EmptyResult(
                    f"carried history has {self.tail.shape[-1]} columns, "
                    f"need {history}"
                )
            buf = np.concatenate([self.tail, x], axis=-1)
            out = slice(self.d, self.d + x.shape[-1])
        else:
            buf = x
            out = slice(self.d, x.shape[-1] - self.p)
            if out.stop <= out.start:
                raise EmptyResult(
                    f"chunk of {x.shape[-1]} columns leaves no valid output "
                    f"for window d={self.d}, p={self.p}; minimum chunk "
                    f"length is {self.d + self.p + 1}"
                )
        if history:
            if buf.shape[-1] < history:
                raise EmptyResult(
                    f"chunk of {buf.shape[-1]} columns is shorter than the "
                    f"window history {history}"
                )
            self.tail = buf[..., -history:].copy()
        else:
            self.tail = buf[..., :0].copy()
        return buf, out
