"""Per-key chunk files written by the file writer sink.

File layout:

    4 bytes   magic b"TFCF"
    u32       header length (little-endian)
    header    UTF-8 JSON with sorted keys: producer, feature,
              sample_rate, dtype, channel_freqs (list or null)
    records   repeated until EOF:
                u64  chunk number
                i32  continuity code
                u32  p, u32 d, u32 l, u32 s
                u8   ndim, u32 per-dimension extent (time last)
                raw  little-endian payload

Chunks are appended in publication order, which is deterministic for a
fixed config, input and fault schedule.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import BinaryIO, Iterator, List, Optional, Tuple

import numpy as np

from .chunks import AlignmentParams, Continuity, DataChunk, SourceKey
from .errors import IoError

MAGIC = b"TFCF"


class ChunkFileWriter:
    """Appends published chunks of one source key to a file."""

    def __init__(
        self,
        path: Path,
        source_key: SourceKey,
        sample_rate: float,
        channel_freqs: Optional[np.ndarray],
        dtype: str = "<f8",
    ):
        self.path = Path(path)
        self.dtype = np.dtype(dtype)
        header = json.dumps(
            {
                "producer": source_key[0],
                "feature": source_key[1],
                "sample_rate": sample_rate,
                "dtype": self.dtype.str,
                "channel_freqs": None
                if channel_freqs is None
                else [float(f) for f in channel_freqs],
            },
            sort_keys=True,
        ).encode("utf-8")
        self._fh: BinaryIO = open(self.path, "wb")
        self._fh.write(MAGIC + struct.pack("<I", len(header)) + header)

    def append(self, chunk: DataChunk) -> None:
        a = chunk.alignment
        record = [
            struct.pack("<Qi", chunk.number, int(chunk.continuity)),
            struct.pack("<4I", a.p, a.d, a.l, a.s),
            struct.pack("<B", chunk.payload.ndim),
            struct.pack(f"<{chunk.payload.ndim}I", *chunk.payload.shape),
            np.ascontiguousarray(chunk.payload, dtype=self.dtype).tobytes(),
        ]
        self._fh.write(b"".join(record))

    def close(self) -> None:
        self._fh.close()


def read_chunk_file(path: Path) -> Tuple[dict, List[dict]]:
    """Read a chunk file back; returns (header, records).

    Each record is a dict with number, continuity, alignment and payload.
    """
    path = Path(path)
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise IoError(f"{path} is not a chunk file")
        (header_len,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(header_len).decode("utf-8"))
        dtype = np.dtype(header["dtype"])
        records = []
        while True:
            head = fh.read(12)
            if not head:
                break
            if len(head) != 12:
                raise IoError(f"{path}: truncated record header")
            number, continuity = struct.unpack("<Qi", head)
            p, d, l, s = struct.unpack("<4I", fh.read(16))
            (ndim,) = struct.unpack("<B", fh.read(1))
            shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
            nbytes = int(np.prod(shape)) * dtype.itemsize
            raw = fh.read(nbytes)
            if len(raw) != nbytes:
                raise IoError(f"{path}: truncated payload")
            records.append(
                {
                    "number": number,
                    "continuity": Continuity(continuity),
                    "alignment": AlignmentParams(p, d, l, s),
                    "payload": np.frombuffer(raw, dtype=dtype).reshape(shape).copy(),
                }
            )
    return header, records


def concatenate_payloads(records: List[dict]) -> np.ndarray:
    """Concatenate record payloads along the time axis."""
    if not records:
        raise IoError("no records to concatenate")
    return np.concatenate([r["payload"] for r in records], axis=-1)


def export_csv(path: Path, csv_path: Path) -> None:
    """Dump a 2-D chunk file as CSV (rows = channels, columns = time)."""
    header, records = read_chunk_file(path)
    data = concatenate_payloads(records)
    if data.ndim == 1:
        data = data[None, :]
    np.savetxt(csv_path, data, delimiter=",")


def iter_chunks(path: Path) -> Iterator[DataChunk]:
    """Yield file records as DataChunks (payload dtype as stored)."""
    header, records = read_chunk_file(path)
    freqs = header["channel_freqs"]
    channel_freqs = None if freqs is None else np.asarray(freqs, dtype=float)
    key = (header["producer"], header["feature"])
    for rec in records:
        yield DataChunk(
            number=rec["number"],
            source_key=key,
            payload=rec["payload"],
            sample_rate=header["sample_rate"],
            alignment=rec["alignment"],
            continuity=rec["continuity"],
            channel_freqs=channel_freqs,
        )
