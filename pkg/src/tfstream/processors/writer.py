"""File writer sink: one chunk file per subscribed source key."""

from __future__ import annotations

from pathlib import Path
from typing import Dict

from ..chunkfile import ChunkFileWriter
from ..chunks import Continuity, DataChunk, SourceKey
from .base import SinkProcessor, register


@register
class FileWriter(SinkProcessor):
    """Appends arriving chunks to per-key files in the output directory.

    Calibration chunks are consumed but never written.
    """

    kind = "file_writer"

    def __init__(self, name: str, params: dict):
        super().__init__(name, params)
        self.directory = Path(params["directory"])
        self.dtype = params.get("dtype", "<f8")
        self._writers: Dict[SourceKey, ChunkFileWriter] = {}
        self.written: Dict[SourceKey, int] = {}

    def path_for(self, key: SourceKey) -> Path:
        return self.directory / f"{key[0]}.{key[1]}.tfc"

    def consume(self, chunk: DataChunk) -> None:
        if Continuity(chunk.continuity) is Continuity.CALIBRATION:
            return
        key = chunk.source_key
        if key not in self._writers:
            self.directory.mkdir(parents=True, exist_ok=True)
            self._writers[key] = ChunkFileWriter(
                self.path_for(key),
                key,
                chunk.sample_rate,
                chunk.channel_freqs,
                dtype=self.dtype,
            )
            self.written[key] = 0
        self._writers[key].append(chunk)
        self.written[key] += 1

    def close(self) -> None:
        for writer in self._writers.values():
            writer.close()
