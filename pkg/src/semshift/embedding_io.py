"""Binary contextual-embedding stream format (magic ``CTE1``).

This is the wire contract between the tokenize/aggregate engine and the
encoder-side extractor. Layout, little-endian throughout:

    header:  magic "CTE1" | version u16 | dim u16 | layer_count u8 |
             dtype u8 (0 = float32) | string table
    table:   count u32, then per entry byte-length u16 + UTF-8 bytes
    block:   doc_ref u32 | period_ref u32 | token_count u32 |
             token_count * { word_ref u32 | word_instance u32 |
                             token_id u32 | layer_count*dim float32 } |
             crc u32  (CRC-32 of all block bytes before the crc)

Vectors are stored as 32-bit floats; all arithmetic that consumes them
widens to 64-bit. Each block carries its own checksum so corruption is
reported with a block ordinal instead of poisoning a whole multi-GB
stream. A JSON-lines debug codec mirrors the same fields with vectors
as float arrays.
"""

from __future__ import annotations

import contextlib
import json
import struct
import zlib
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator, Sequence

import numpy as np

from .errors import StreamCorruptionError, StreamFormatError, StreamTruncatedError

MAGIC = b"CTE1"
VERSION = 1
DTYPE_F32 = 0

_HEAD_FIXED = struct.Struct("<4sHHBB")
_BLOCK_HEAD = struct.Struct("<III")
_U16 = struct.Struct("<H")
_U32 = struct.Struct("<I")


class StringTable:
    """Append-only string<->ref table embedded in a stream header."""

    def __init__(self, strings: Sequence[str] = ()):
        self._strings: list[str] = []
        self._index: dict[str, int] = {}
        for s in strings:
            self.intern(s)

    def intern(self, s: str) -> int:
        ref = self._index.get(s)
        if ref is None:
            ref = len(self._strings)
            self._strings.append(s)
            self._index[s] = ref
        return ref

    def resolve(self, ref: int) -> str:
        if not 0 <= ref < len(self._strings):
            raise StreamFormatError(f"string ref {ref} outside table of size {len(self)}")
        return self._strings[ref]

    def __len__(self) -> int:
        return len(self._strings)

    def __iter__(self):
        return iter(self._strings)

    def __eq__(self, other) -> bool:
        return isinstance(other, StringTable) and self._strings == other._strings


@dataclass
class StreamHeader:
    dim: int
    layer_count: int
    strings: StringTable = field(default_factory=StringTable)
    dtype: int = DTYPE_F32
    version: int = VERSION

    def __post_init__(self):
        if self.dim < 1:
            raise StreamFormatError(f"dim must be >= 1, got {self.dim}")
        if self.layer_count < 1:
            raise StreamFormatError(f"layer_count must be >= 1, got {self.layer_count}")


def token_dtype(layer_count: int, dim: int) -> np.dtype:
    """Packed per-token record layout used inside blocks."""
    return np.dtype(
        [
            ("word_ref", "<u4"),
            ("word_instance", "<u4"),
            ("token_id", "<u4"),
            ("vectors", "<f4", (layer_count, dim)),
        ]
    )


@dataclass
class SequenceBlock:
    """Per-token vectors of one tokenized sequence, with provenance refs.

    ``vectors`` has shape (token_count, layer_count, dim), float32. The
    refs resolve against the owning header's string table.
    """

    doc_ref: int
    period_ref: int
    word_refs: np.ndarray
    word_instances: np.ndarray
    token_ids: np.ndarray
    vectors: np.ndarray

    @classmethod
    def build(
        cls,
        strings: StringTable,
        doc_id: str,
        period_label: str,
        words: Sequence[str],
        word_instances: Sequence[int],
        token_ids: Sequence[int],
        vectors,
    ) -> "SequenceBlock":
        """Intern the string fields and assemble a block."""
        vec_arr = np.asarray(vectors, dtype=np.float32)
        if vec_arr.size == 0:
            vec_arr = vec_arr.reshape(0, 0, 0)
        return cls(
            doc_ref=strings.intern(doc_id),
            period_ref=strings.intern(period_label),
            word_refs=np.array([strings.intern(w) for w in words], dtype=np.uint32),
            word_instances=np.asarray(word_instances, dtype=np.uint32),
            token_ids=np.asarray(token_ids, dtype=np.uint32),
            vectors=vec_arr,
        )

    def __len__(self) -> int:
        return len(self.token_ids)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SequenceBlock):
            return NotImplemented
        if self.vectors.size or other.vectors.size:
            if self.vectors.shape != other.vectors.shape:
                return False
        return (
            self.doc_ref == other.doc_ref
            and self.period_ref == other.period_ref
            and self.word_refs.tobytes() == other.word_refs.tobytes()
            and self.word_instances.tobytes() == other.word_instances.tobytes()
            and self.token_ids.tobytes() == other.token_ids.tobytes()
            and self.vectors.tobytes() == other.vectors.tobytes()
        )

    def doc_id(self, header: StreamHeader) -> str:
        return header.strings.resolve(self.doc_ref)

    def period_label(self, header: StreamHeader) -> str:
        return header.strings.resolve(self.period_ref)


def encode_string_table(strings: StringTable) -> bytes:
    """Serialize a string table: u32 count, then u16 length + UTF-8 per entry."""
    parts = [_U32.pack(len(strings))]
    for s in strings:
        raw = s.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise StreamFormatError(f"string table entry longer than 65535 bytes: {s[:40]!r}...")
        parts.append(_U16.pack(len(raw)))
        parts.append(raw)
    return b"".join(parts)


def read_string_table(source: IO[bytes]) -> StringTable:
    (count,) = _U32.unpack(_read_exact(source, 4, "string table count"))
    strings = StringTable()
    for i in range(count):
        (length,) = _U16.unpack(_read_exact(source, 2, f"string table entry {i}"))
        strings.intern(_read_exact(source, length, f"string table entry {i}").decode("utf-8"))
    if len(strings) != count:
        raise StreamFormatError("duplicate entries in string table")
    return strings


def _block_body(header: StreamHeader, block: SequenceBlock, ordinal: int) -> bytes:
    n = len(block)
    vectors = block.vectors
    if n == 0 and vectors.size == 0:
        vectors = vectors.reshape(0, header.layer_count, header.dim)
    if vectors.ndim != 3 or vectors.shape != (n, header.layer_count, header.dim):
        # locate the first offending token for the error message
        for t in range(n):
            vec = np.asarray(vectors[t]) if vectors.ndim else None
            if vec is None or vec.shape != (header.layer_count, header.dim):
                raise StreamFormatError(
                    f"block {ordinal}, token {t}: vector shape "
                    f"{getattr(vec, 'shape', None)} != ({header.layer_count}, {header.dim})"
                )
        raise StreamFormatError(
            f"block {ordinal}: vectors shape {vectors.shape} != "
            f"({n}, {header.layer_count}, {header.dim})"
        )
    table_size = len(header.strings)
    for name, refs in (("doc", [block.doc_ref]), ("period", [block.period_ref])):
        if refs[0] >= table_size:
            raise StreamFormatError(f"block {ordinal}: {name} ref {refs[0]} outside string table")
    if n and int(block.word_refs.max(initial=0)) >= table_size:
        raise StreamFormatError(f"block {ordinal}: word ref outside string table")
    records = np.empty(n, dtype=token_dtype(header.layer_count, header.dim))
    records["word_ref"] = block.word_refs
    records["word_instance"] = block.word_instances
    records["token_id"] = block.token_ids
    records["vectors"] = vectors.astype("<f4", copy=False)
    return _BLOCK_HEAD.pack(block.doc_ref, block.period_ref, n) + records.tobytes()


def write_stream(header: StreamHeader, blocks: Iterable[SequenceBlock], sink: IO[bytes]) -> int:
    """Serialize header and blocks to ``sink``; returns bytes written."""
    if header.dtype != DTYPE_F32:
        raise StreamFormatError(f"unsupported dtype {header.dtype}")
    written = 0
    head = _HEAD_FIXED.pack(MAGIC, header.version, header.dim, header.layer_count, header.dtype)
    table = encode_string_table(header.strings)
    sink.write(head)
    sink.write(table)
    written += len(head) + len(table)
    for ordinal, block in enumerate(blocks):
        body = _block_body(header, block, ordinal)
        crc = zlib.crc32(body) & 0xFFFFFFFF
        sink.write(body)
        sink.write(_U32.pack(crc))
        written += len(body) + 4
    return written


def write_stream_path(header: StreamHeader, blocks: Iterable[SequenceBlock], path) -> int:
    with open(path, "wb") as fh:
        return write_stream(header, blocks, fh)


def _read_exact(source: IO[bytes], n: int, what: str) -> bytes:
    raw = source.read(n)
    if len(raw) != n:
        raise StreamTruncatedError(f"stream ended inside {what} (wanted {n} bytes, got {len(raw)})")
    return raw


def read_header(source: IO[bytes]) -> StreamHeader:
    raw = source.read(_HEAD_FIXED.size)
    if len(raw) < _HEAD_FIXED.size:
        raise StreamTruncatedError("stream shorter than the fixed header")
    magic, version, dim, layer_count, dtype = _HEAD_FIXED.unpack(raw)
    if magic != MAGIC:
        raise StreamFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise StreamFormatError(f"unsupported stream version {version}")
    if dtype != DTYPE_F32:
        raise StreamFormatError(f"unsupported dtype byte {dtype}")
    strings = read_string_table(source)
    return StreamHeader(dim=dim, layer_count=layer_count, strings=strings, dtype=dtype)


def read_blocks(source: IO[bytes], header: StreamHeader) -> Iterator[SequenceBlock]:
    """Lazily decode blocks; never reads past the last block it yields."""
    record_type = token_dtype(header.layer_count, header.dim)
    ordinal = 0
    while True:
        head = source.read(_BLOCK_HEAD.size)
        if not head:
            return
        if len(head) < _BLOCK_HEAD.size:
            raise StreamTruncatedError(f"block {ordinal}: truncated block header")
        doc_ref, period_ref, n = _BLOCK_HEAD.unpack(head)
        payload = _read_exact(source, n * record_type.itemsize, f"block {ordinal} payload")
        (crc_stored,) = _U32.unpack(_read_exact(source, 4, f"block {ordinal} checksum"))
        crc_actual = zlib.crc32(payload, zlib.crc32(head)) & 0xFFFFFFFF
        if crc_actual != crc_stored:
            raise StreamCorruptionError(ordinal)
        records = np.frombuffer(payload, dtype=record_type, count=n)
        table_size = len(header.strings)
        refs_max = max(doc_ref, period_ref, int(records["word_ref"].max(initial=0)))
        if refs_max >= table_size:
            raise StreamFormatError(f"block {ordinal}: ref {refs_max} outside string table")
        yield SequenceBlock(
            doc_ref=doc_ref,
            period_ref=period_ref,
            word_refs=records["word_ref"].copy(),
            word_instances=records["word_instance"].copy(),
            token_ids=records["token_id"].copy(),
            vectors=records["vectors"].copy(),
        )
        ordinal += 1


def read_stream(source: IO[bytes]) -> tuple[StreamHeader, Iterator[SequenceBlock]]:
    header = read_header(source)
    return header, read_blocks(source, header)


@contextlib.contextmanager
def open_stream(path):
    """Context manager yielding (header, lazy blocks) for a stream file.

    Detects the binary format by magic and falls back to the JSON-lines
    debug codec.
    """
    with open(path, "rb") as fh:
        probe = fh.read(4)
        fh.seek(0)
        if probe == MAGIC:
            header = read_header(fh)
            yield header, read_blocks(fh, header)
        else:
            text = open(path, encoding="utf-8")
            try:
                header, blocks = read_stream_jsonl(text)
                yield header, blocks
            finally:
                text.close()


def combine_layers(vectors) -> np.ndarray:
    """Elementwise sum of the per-layer vectors of one token, in float64.

    Accepts a (layer_count, dim) array or an equal-length list of dim
    vectors; a single layer passes through unchanged (as float64).
    """
    arr = np.asarray(vectors, dtype=np.float64)
    if arr.ndim == 1:
        raise ValueError("expected one vector per layer, got a flat vector")
    if arr.ndim != 2 or arr.dtype == object:
        raise ValueError(f"ragged or mis-shaped layer input: shape {arr.shape}")
    return np.add.reduce(arr, axis=0, dtype=np.float64)


# --- JSON-lines debug codec (same fields, vectors as float arrays) ---


def write_stream_jsonl(header: StreamHeader, blocks: Iterable[SequenceBlock], sink: IO[str]) -> int:
    n = 0
    sink.write(
        json.dumps(
            {
                "magic": MAGIC.decode(),
                "version": header.version,
                "dim": header.dim,
                "layer_count": header.layer_count,
                "dtype": header.dtype,
                "strings": list(header.strings),
            },
            ensure_ascii=False,
        )
        + "\n"
    )
    for ordinal, block in enumerate(blocks):
        _block_body(header, block, ordinal)  # reuse validation
        sink.write(
            json.dumps(
                {
                    "doc_ref": int(block.doc_ref),
                    "period_ref": int(block.period_ref),
                    "word_refs": [int(x) for x in block.word_refs],
                    "word_instances": [int(x) for x in block.word_instances],
                    "token_ids": [int(x) for x in block.token_ids],
                    "vectors": [[[float(v) for v in layer] for layer in tok] for tok in block.vectors],
                }
            )
            + "\n"
        )
        n += 1
    return n


def read_stream_jsonl(source: IO[str]) -> tuple[StreamHeader, Iterator[SequenceBlock]]:
    first = source.readline()
    if not first.strip():
        raise StreamTruncatedError("empty JSONL stream")
    try:
        head = json.loads(first)
    except json.JSONDecodeError as exc:
        raise StreamFormatError(f"bad JSONL header: {exc}") from None
    if head.get("magic") != MAGIC.decode():
        raise StreamFormatError(f"bad magic {head.get('magic')!r}")
    if head.get("version") != VERSION:
        raise StreamFormatError(f"unsupported stream version {head.get('version')}")
    header = StreamHeader(
        dim=head["dim"],
        layer_count=head["layer_count"],
        strings=StringTable(head["strings"]),
        dtype=head.get("dtype", DTYPE_F32),
    )

    def blocks() -> Iterator[SequenceBlock]:
        for line in source:
            if not line.strip():
                continue
            obj = json.loads(line)
            yield SequenceBlock(
                doc_ref=obj["doc_ref"],
                period_ref=obj["period_ref"],
                word_refs=np.array(obj["word_refs"], dtype=np.uint32),
                word_instances=np.array(obj["word_instances"], dtype=np.uint32),
                token_ids=np.array(obj["token_ids"], dtype=np.uint32),
                vectors=np.array(obj["vectors"], dtype=np.float32).reshape(
                    len(obj["word_refs"]), header.layer_count, header.dim
                ),
            )

    return header, blocks()
