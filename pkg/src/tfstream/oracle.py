"""Unchunked reference computation.

Feeds each source's whole signal through the processor graph as a single
discontinuous chunk (after an optional calibration pass), using the same
kernels and the same merge slicing as the streaming runtime.  Because
every output position is the identical windowed dot product in both
paths, streaming results must reproduce these arrays exactly up to the
stream tail that streaming legitimately withholds.
"""

from __future__ import annotations

from typing import Dict, Optional

import numpy as np

from .alignment import compose
from .chunks import Continuity, DataChunk, SourceKey, ZERO_ALIGNMENT
from .graph import GraphPlan
from .merge import MergeState, complete_merge
from .processors import SinkProcessor, SourceProcessor


def _feed_pass(
    plan: GraphPlan,
    source_arrays: Dict[str, np.ndarray],
    continuity: Continuity,
) -> Dict[SourceKey, DataChunk]:
    """Push one whole-signal chunk per source through all transforms."""
    available: Dict[SourceKey, DataChunk] = {}
    for name in plan.order:
        inst = plan.instances[name]
        if isinstance(inst, SinkProcessor):
            continue
        if isinstance(inst, SourceProcessor):
            if name not in source_arrays:
                continue
            key = (name, inst.feature)
            available[key] = DataChunk(
                number=0,
                source_key=key,
                payload=source_arrays[name],
                sample_rate=inst.sample_rate(),
                alignment=ZERO_ALIGNMENT,
                continuity=continuity,
            )
            continue
        keys = plan.in_keys[name]
        if any(key not in available for key in keys):
            continue
        chunk_set = {key: available[key] for key in keys}
        merged, _ = complete_merge(MergeState(), chunk_set, 0)
        outputs = inst.process(merged)
        base = inst.convert_alignment(merged.alignment)
        alignments = inst.feature_alignment()
        for feature, data in outputs.items():
            key = (name, feature)
            available[key] = DataChunk(
                number=0,
                source_key=key,
                payload=np.ascontiguousarray(data.payload),
                sample_rate=data.sample_rate,
                alignment=compose(base, alignments[feature]),
                continuity=continuity,
                channel_freqs=data.channel_freqs,
            )
    return available


def run_unchunked(plan: GraphPlan) -> Dict[SourceKey, DataChunk]:
    """Reference results per published source key, faults ignored.

    Runs the calibration pass first when a source provides one, so
    processors that estimate (theta, beta) see the same noise statistics
    as in the streaming run.  The plan's processor instances are mutated
    (window state, calibration); use a freshly validated plan.
    """
    for inst in plan.instances.values():
        if hasattr(inst, "reset"):
            inst.reset()

    calibration_arrays = {}
    for name, inst in plan.instances.items():
        if isinstance(inst, SourceProcessor):
            signal = getattr(inst, "calibration_signal", lambda: None)()
            if signal is not None:
                calibration_arrays[name] = signal
    if calibration_arrays:
        _feed_pass(plan, calibration_arrays, Continuity.CALIBRATION)

    source_arrays = {
        name: inst.full_signal()
        for name, inst in plan.instances.items()
        if isinstance(inst, SourceProcessor)
    }
    results = _feed_pass(plan, source_arrays, Continuity.DISCONTINUOUS)
    return {
        key: chunk
        for key, chunk in results.items()
        if not isinstance(plan.instances[key[0]], SourceProcessor)
    }


def compare_streamed(
    streamed: np.ndarray,
    reference: np.ndarray,
    rtol: float = 1e-6,
    atol: float = 1e-9,
) -> Optional[str]:
    """Check a concatenated streamed result against the reference.

    Streaming withholds the stream tail (the included-past columns of
    the final chunk plus any incomplete block), so the streamed array
    may be shorter; the overlap must match including NaN placement.
    Returns None on success, else a human-readable mismatch summary.
    """
    n = streamed.shape[-1]
    if n > reference.shape[-1]:
        return (
            f"streamed result is longer than the reference "
            f"({n} > {reference.shape[-1]} columns)"
        )
    ref = reference[..., :n]
    if streamed.shape != ref.shape:
        return f"shape mismatch: {streamed.shape} vs {ref.shape}"
    nan_s = np.isnan(streamed)
    nan_r = np.isnan(ref)
    if not np.array_equal(nan_s, nan_r):
        return f"NaN placement differs in {int((nan_s != nan_r).sum())} cells"
    close = np.isclose(streamed, ref, rtol=rtol, atol=atol, equal_nan=True)
    if not close.all():
        bad = ~close
        worst = np.nanmax(np.abs(streamed[bad] - ref[bad]))
        return f"{int(bad.sum())} cells differ, worst |delta| = {worst:.3e}"
    return None
