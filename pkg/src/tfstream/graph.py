"""Pipeline configuration: parsing, graph validation, alignment budgets.

A pipeline is a DAG of named processors (forks and merges, no loops)
with per-edge transports and an optional fault schedule.  Validation
topologically sorts the graph, propagates sample rates, chunk lengths
and cumulative alignment counters, and rejects configurations whose
chunk size cannot satisfy d + p < length at some merge point.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Tuple

import yaml

from .alignment import compose, merge_params
from .chunks import AlignmentParams, SourceKey, ZERO_ALIGNMENT
from .errors import ChunkTooShortForDepth, ConfigError, CycleError
from .faults import FaultSchedule, parse_fault_events
from .processors import SinkProcessor, SourceProcessor, resolve_kind


@dataclass(frozen=True)
class ProcessorSpec:
    name: str
    kind: str
    params: dict


@dataclass(frozen=True)
class Edge:
    producer: str
    feature: str
    consumer: str
    transport: str = "local"  # "local" or "tcp:<host>:<port>"
    wire_dtype: str = "<f4"

    @property
    def source_key(self) -> SourceKey:
        return (self.producer, self.feature)


@dataclass
class PipelineConfig:
    processors: List[ProcessorSpec]
    edges: List[Edge]
    faults: FaultSchedule = field(default_factory=FaultSchedule)
    queue_depth: int = 16


@dataclass
class GraphPlan:
    """A validated pipeline: instances, topology and alignment budgets."""

    config: PipelineConfig
    order: List[str]                       # topological, sources first
    instances: Dict[str, object]
    in_keys: Dict[str, Tuple[SourceKey, ...]]
    out_edges: Dict[str, List[Edge]]
    cumulative: Dict[SourceKey, AlignmentParams]
    merged_at: Dict[str, AlignmentParams]
    rates: Dict[SourceKey, float]
    chunk_lengths: Dict[str, float]        # nominal input time-length per node
    channels: Dict[SourceKey, int]

    def minimum_chunk_length(self) -> int:
        """Smallest source chunk length the deepest merge point allows.

        Sinks are excluded: they concatenate whatever arrives and have no
        window depth of their own.
        """
        worst = 1
        source_len = max(
            self.chunk_lengths[src] for src in self._source_names()
        )
        for name, params in self.merged_at.items():
            if isinstance(self.instances[name], SinkProcessor):
                continue
            scale = self.chunk_lengths[name] / source_len
            need = (params.d + params.p + 1) / scale
            worst = max(worst, int(-(-need // 1)))
        return worst

    def _source_names(self) -> List[str]:
        return [
            n for n, inst in self.instances.items()
            if isinstance(inst, SourceProcessor)
        ]


def load_config(path: Path) -> PipelineConfig:
    """Parse the YAML pipeline description."""
    with open(path) as fh:
        raw = yaml.safe_load(fh)
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: expected a mapping at top level")
    return config_from_dict(raw)


def config_from_dict(raw: dict) -> PipelineConfig:
    processors = []
    for item in raw.get("processors", []):
        if "name" not in item or "kind" not in item:
            raise ConfigError(f"processor entry needs name and kind: {item}")
        processors.append(
            ProcessorSpec(
                name=item["name"],
                kind=item["kind"],
                params=item.get("params", {}) or {},
            )
        )
    edges = []
    for item in raw.get("edges", []):
        source = item.get("from", "")
        producer, dot, feature = source.partition(".")
        if not dot:
            raise ConfigError(f"edge 'from' must be producer.feature: {source!r}")
        edges.append(
            Edge(
                producer=producer,
                feature=feature,
                consumer=item.get("to", ""),
                transport=item.get("transport", "local"),
                wire_dtype=item.get("wire_dtype", "<f4"),
            )
        )
    faults = parse_fault_events(raw.get("faults"))
    return PipelineConfig(
        processors=processors,
        edges=edges,
        faults=faults,
        queue_depth=int(raw.get("queue_depth", 16)),
    )


def _topological_order(names: List[str], edges: List[Edge]) -> List[str]:
    """Kahn's algorithm; raises CycleError when no full ordering exists."""
    dependents: Dict[str, List[str]] = {n: [] for n in names}
    in_degree = {n: 0 for n in names}
    seen = set()
    for edge in edges:
        pair = (edge.producer, edge.consumer)
        if pair in seen:
            continue
        seen.add(pair)
        dependents[edge.producer].append(edge.consumer)
        in_degree[edge.consumer] += 1
    ready = sorted(n for n in names if in_degree[n] == 0)
    order: List[str] = []
    while ready:
        node = ready.pop(0)
        order.append(node)
        for successor in sorted(dependents[node]):
            in_degree[successor] -= 1
            if in_degree[successor] == 0:
                ready.append(successor)
        ready.sort()
    if len(order) != len(names):
        cyclic = sorted(set(names) - set(order))
        raise CycleError(f"processor graph has a cycle through {cyclic}")
    return order


def validate_graph(config: PipelineConfig) -> GraphPlan:
    """Instantiate and validate the whole pipeline; returns the plan."""
    names = [spec.name for spec in config.processors]
    if len(set(names)) != len(names):
        raise ConfigError("duplicate processor names")
    specs = {spec.name: spec for spec in config.processors}

    for edge in config.edges:
        if edge.producer not in specs:
            raise ConfigError(f"edge references unknown producer {edge.producer!r}")
        if edge.consumer not in specs:
            raise ConfigError(f"edge references unknown consumer {edge.consumer!r}")

    order = _topological_order(names, config.edges)

    instances: Dict[str, object] = {}
    for spec in config.processors:
        cls = resolve_kind(spec.kind)
        try:
            instances[spec.name] = cls(spec.name, spec.params)
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"processor {spec.name!r}: {exc}") from exc

    in_keys: Dict[str, Tuple[SourceKey, ...]] = {n: () for n in names}
    out_edges: Dict[str, List[Edge]] = {n: [] for n in names}
    for edge in config.edges:
        out_edges[edge.producer].append(edge)
        in_keys[edge.consumer] = tuple(
            sorted(set(in_keys[edge.consumer]) | {edge.source_key})
        )

    cumulative: Dict[SourceKey, AlignmentParams] = {}
    merged_at: Dict[str, AlignmentParams] = {}
    rates: Dict[SourceKey, float] = {}
    chunk_lengths: Dict[str, float] = {}
    channels: Dict[SourceKey, int] = {}

    calibrated_sources = set()
    for name in order:
        inst = instances[name]
        if isinstance(inst, SourceProcessor):
            key = (name, inst.feature)
            cumulative[key] = ZERO_ALIGNMENT
            rates[key] = inst.sample_rate()
            chunk_lengths[name] = float(inst.chunk_size())
            chunk_lengths[f"{name}:out"] = chunk_lengths[name]
            channels[key] = 1
            if inst.params.get("calibration"):
                calibrated_sources.add(name)
            continue
        keys = in_keys[name]
        if not keys:
            raise ConfigError(f"processor {name!r} has no incoming edges")
        for key in keys:
            if key not in cumulative:
                raise ConfigError(
                    f"edge {key[0]}.{key[1]} -> {name}: producer does not "
                    f"publish feature {key[1]!r}"
                )
        in_rates = {rates[key] for key in keys}
        if len(in_rates) != 1:
            raise ConfigError(f"processor {name!r} receives mixed rates {in_rates}")
        rate_in = in_rates.pop()
        e_in = min(chunk_lengths[f"{key[0]}:out"] for key in keys)
        chunk_lengths[name] = e_in
        merged = merge_params([cumulative[key] for key in keys])
        merged_at[name] = merged
        if isinstance(inst, SinkProcessor):
            continue
        # a fractional nominal length means short/long chunks alternate;
        # the short ones are the binding case
        if merged.d + merged.p >= int(e_in):
            raise ChunkTooShortForDepth(
                f"processor {name!r}: merged window d+p = "
                f"{merged.d + merged.p} does not fit the chunk length "
                f"{int(e_in)}; minimum is {merged.d + merged.p + 1}"
            )
        rate_out = rate_in
        if hasattr(inst, "prepare"):
            rate_out = inst.prepare(rate_in)
        in_channels = max(channels[key] for key in keys)
        merged_out = inst.convert_alignment(merged)
        for feature, align in inst.feature_alignment().items():
            key = (name, feature)
            cumulative[key] = compose(merged_out, align)
            rates[key] = rate_out
            channels[key] = _output_channels(inst, feature, in_channels)
        chunk_lengths[f"{name}:out"] = e_in * inst.time_scale()

    _check_calibration(instances, in_keys, calibrated_sources)

    edge_triples = [(e.producer, e.feature, e.consumer) for e in config.edges]
    source_names = [
        n for n, inst in instances.items() if isinstance(inst, SourceProcessor)
    ]
    config.faults.validate(edge_triples, source_names)

    return GraphPlan(
        config=config,
        order=order,
        instances=instances,
        in_keys=in_keys,
        out_edges=out_edges,
        cumulative=cumulative,
        merged_at=merged_at,
        rates=rates,
        chunk_lengths=chunk_lengths,
        channels=channels,
    )


def _output_channels(inst, feature: str, in_channels: int) -> int:
    from .processors import GammaChirpFilterbank, PTNProcessor

    if isinstance(inst, GammaChirpFilterbank):
        return inst.channels
    if isinstance(inst, PTNProcessor):
        return -(-in_channels // inst.block_df)
    return in_channels


def _ancestors(name: str, in_keys: Dict[str, Tuple[SourceKey, ...]]) -> set:
    seen = set()
    stack = [name]
    while stack:
        node = stack.pop()
        for key in in_keys.get(node, ()):
            if key[0] not in seen:
                seen.add(key[0])
                stack.append(key[0])
    return seen


def _check_calibration(instances, in_keys, calibrated_sources) -> None:
    """Processors needing (theta, beta) must get them from config or from
    a calibration chunk emitted by an upstream source."""
    for name, inst in instances.items():
        needs = getattr(inst, "needs_threshold", False) and (
            inst.theta is None or inst.beta is None
        )
        if not needs:
            continue
        upstream = _ancestors(name, in_keys)
        if not upstream & calibrated_sources:
            raise ConfigError(
                f"processor {name!r} has no (theta, beta) and no upstream "
                f"source emits a calibration chunk; configure theta/beta "
                f"or enable calibration on the input"
            )
