"""Word-vector reconstruction and streaming mean aggregation.

Subword vectors are summed across encoder layers, averaged back into one
vector per word usage, and reduced into per-period and corpus-wide mean
representations. Accumulators keep 64-bit sums and are mergeable, so
stream shards can be aggregated in parallel and combined afterwards.

Finalized representations are persisted in the ``TSR1`` binary format:

    magic "TSR1" | version u16 | dim u16 | string table (as in CTE1) |
    entries { word_ref u32 | scope_ref u32 | count u64 | dim float32 }

plus a CSV export ``word,scope,count,v0,...,v{dim-1}``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator

import numpy as np

from .corpus import GLOBAL_SCOPE
from .embedding_io import (
    SequenceBlock,
    StreamHeader,
    StringTable,
    encode_string_table,
    read_string_table,
)
from .errors import (
    SemShiftError,
    StreamFormatError,
    StreamTruncatedError,
)

STORE_MAGIC = b"TSR1"
STORE_VERSION = 1
DEFAULT_MIN_COUNT = 5

_STORE_HEAD = struct.Struct("<4sHH")
_ENTRY_HEAD = struct.Struct("<IIQ")

SCOPE_PER_PERIOD = "per-period"
SCOPE_GLOBAL = "global"
SCOPE_BOTH = "both"


def reconstruct_word(subword_vectors) -> np.ndarray:
    """Elementwise mean of a word's subword vectors (float64).

    This is the usage-level reconstruction: a word split into several
    pieces gets the average of its piece embeddings.
    """
    arr = np.asarray(subword_vectors, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"expected a list of equal-dim vectors, got shape {arr.shape}")
    if arr.shape[0] == 0:
        raise ValueError("cannot reconstruct a word from zero subword vectors")
    return np.add.reduce(arr, axis=0, dtype=np.float64) / arr.shape[0]


class MeanAccumulator:
    """Mergeable (sum, count) pair; sums kept in float64."""

    __slots__ = ("sum", "count")

    def __init__(self, dim: int):
        self.sum = np.zeros(dim, dtype=np.float64)
        self.count = 0

    @property
    def dim(self) -> int:
        return self.sum.shape[0]

    def add(self, vector) -> "MeanAccumulator":
        v = np.asarray(vector, dtype=np.float64)
        if v.shape != self.sum.shape:
            raise ValueError(f"dim mismatch: accumulator {self.dim}, vector {v.shape}")
        self.sum += v
        self.count += 1
        return self

    def merge(self, other: "MeanAccumulator") -> "MeanAccumulator":
        if other.dim != self.dim:
            raise ValueError(f"dim mismatch: {self.dim} vs {other.dim}")
        self.sum += other.sum
        self.count += other.count
        return self

    def finalize(self) -> np.ndarray:
        """Mean narrowed to float32 storage precision."""
        if self.count == 0:
            raise ValueError("cannot finalize an empty accumulator")
        return (self.sum / self.count).astype(np.float32)


@dataclass
class RepresentationStore:
    """Finalized per-scope word representations."""

    scope: str
    dim: int
    words: dict[str, tuple[np.ndarray, int]] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, word: str) -> bool:
        return word in self.words

    def vector(self, word: str) -> np.ndarray:
        return self.words[word][0]

    def count(self, word: str) -> int:
        return self.words[word][1]


def iter_usages(header: StreamHeader, block: SequenceBlock) -> Iterator[tuple[str, np.ndarray, np.ndarray]]:
    """Yield (word, token_ids, usage_vector) per contiguous word-instance run."""
    n = len(block)
    if n == 0:
        return
    instances = block.word_instances
    boundaries = np.flatnonzero(np.diff(instances)) + 1
    starts = np.concatenate(([0], boundaries))
    ends = np.concatenate((boundaries, [n]))
    # sum over layers first (float64), identical op order to combine_layers
    piece_sums = np.add.reduce(block.vectors.astype(np.float64), axis=1, dtype=np.float64)
    for start, end in zip(starts, ends):
        word = header.strings.resolve(int(block.word_refs[start]))
        usage = np.add.reduce(piece_sums[start:end], axis=0, dtype=np.float64) / (end - start)
        yield word, block.token_ids[start:end], usage


class RepresentationBuilder:
    """Streaming builder of per-scope mean accumulators.

    ``scope`` selects which accumulators are kept: per-period labels,
    the corpus-wide GLOBAL scope, or both. Builders over disjoint stream
    shards can be merged before finalizing.
    """

    def __init__(
        self,
        dim: int,
        scope: str = SCOPE_BOTH,
        unk_token_id: int | None = None,
        exclude: Callable[[str], bool] | None = None,
    ):
        if scope not in (SCOPE_PER_PERIOD, SCOPE_GLOBAL, SCOPE_BOTH):
            raise ValueError(f"unknown scope mode {scope!r}")
        self.dim = dim
        self.scope = scope
        self.unk_token_id = unk_token_id
        self.exclude = exclude
        self._acc: dict[str, dict[str, MeanAccumulator]] = {}
        self.usages_skipped = 0

    def _accumulator(self, scope: str, word: str) -> MeanAccumulator:
        by_word = self._acc.setdefault(scope, {})
        acc = by_word.get(word)
        if acc is None:
            acc = by_word[word] = MeanAccumulator(self.dim)
        return acc

    def add_block(self, header: StreamHeader, block: SequenceBlock) -> None:
        if header.dim != self.dim:
            raise StreamFormatError(f"stream dim {header.dim} != builder dim {self.dim}")
        period = block.period_label(header)
        for word, token_ids, usage in iter_usages(header, block):
            if self.unk_token_id is not None and np.any(token_ids == self.unk_token_id):
                self.usages_skipped += 1
                continue
            if self.exclude is not None and self.exclude(word):
                self.usages_skipped += 1
                continue
            if self.scope in (SCOPE_PER_PERIOD, SCOPE_BOTH):
                self._accumulator(period, word).add(usage)
            if self.scope in (SCOPE_GLOBAL, SCOPE_BOTH):
                self._accumulator(GLOBAL_SCOPE, word).add(usage)

    def add_stream(self, header: StreamHeader, blocks: Iterable[SequenceBlock]) -> None:
        for block in blocks:
            self.add_block(header, block)

    def merge(self, other: "RepresentationBuilder") -> "RepresentationBuilder":
        if other.dim != self.dim:
            raise StreamFormatError(f"cannot merge builders of dim {self.dim} and {other.dim}")
        for scope, by_word in other._acc.items():
            for word, acc in by_word.items():
                self._accumulator(scope, word).merge(acc)
        self.usages_skipped += other.usages_skipped
        return self

    def items(self) -> Iterator[tuple[str, str, MeanAccumulator]]:
        """(scope, word, accumulator) triples, at full 64-bit precision."""
        for scope, by_word in self._acc.items():
            for word, acc in by_word.items():
                yield scope, word, acc

    def finalize(self, min_count: int = DEFAULT_MIN_COUNT) -> dict[str, RepresentationStore]:
        """Drop words below ``min_count`` and narrow means to float32."""
        if min_count < 1:
            raise ValueError(f"min_count must be >= 1, got {min_count}")
        stores: dict[str, RepresentationStore] = {}
        for scope, by_word in self._acc.items():
            store = RepresentationStore(scope=scope, dim=self.dim)
            for word, acc in by_word.items():
                if acc.count < min_count:
                    continue
                vec = acc.finalize()
                if not np.all(np.isfinite(vec)):
                    raise SemShiftError(f"non-finite mean for {word!r} in scope {scope!r}")
                store.words[word] = (vec, acc.count)
            stores[scope] = store
        return stores


def build_representations(
    streams: Iterable[tuple[StreamHeader, Iterable[SequenceBlock]]],
    scope: str = SCOPE_BOTH,
    min_count: int = DEFAULT_MIN_COUNT,
    exclude: Callable[[str], bool] | None = None,
    unk_token_id: int | None = None,
) -> dict[str, RepresentationStore]:
    """Aggregate one or more open streams into finalized stores."""
    builder: RepresentationBuilder | None = None
    for header, blocks in streams:
        if builder is None:
            builder = RepresentationBuilder(header.dim, scope, unk_token_id, exclude)
        builder.add_stream(header, blocks)
    if builder is None:
        return {}
    return builder.finalize(min_count)


def write_stores(stores: Iterable[RepresentationStore], path) -> int:
    """Serialize stores to one TSR1 file; deterministic entry order."""
    ordered = sorted(stores, key=lambda s: s.scope)
    if not ordered:
        raise ValueError("no stores to write")
    dims = {s.dim for s in ordered}
    if len(dims) != 1:
        raise StreamFormatError(f"stores disagree on dim: {sorted(dims)}")
    dim = dims.pop()
    table = StringTable()
    entries: list[tuple[int, int, int, np.ndarray]] = []
    for store in ordered:
        scope_ref = table.intern(store.scope)
        for word in sorted(store.words):
            vec, count = store.words[word]
            entries.append((table.intern(word), scope_ref, count, vec))
    written = 0
    with open(path, "wb") as fh:
        head = _STORE_HEAD.pack(STORE_MAGIC, STORE_VERSION, dim)
        fh.write(head)
        raw_table = encode_string_table(table)
        fh.write(raw_table)
        written += len(head) + len(raw_table)
        for word_ref, scope_ref, count, vec in entries:
            fh.write(_ENTRY_HEAD.pack(word_ref, scope_ref, count))
            raw_vec = vec.astype("<f4", copy=False).tobytes()
            fh.write(raw_vec)
            written += _ENTRY_HEAD.size + len(raw_vec)
    return written


def read_stores(path) -> dict[str, RepresentationStore]:
    """Load a TSR1 file into stores keyed by scope."""
    stores: dict[str, RepresentationStore] = {}
    with open(path, "rb") as fh:
        head = fh.read(_STORE_HEAD.size)
        if len(head) < _STORE_HEAD.size:
            raise StreamTruncatedError("store file shorter than the fixed header")
        magic, version, dim = _STORE_HEAD.unpack(head)
        if magic != STORE_MAGIC:
            raise StreamFormatError(f"bad magic {magic!r}, expected {STORE_MAGIC!r}")
        if version != STORE_VERSION:
            raise StreamFormatError(f"unsupported store version {version}")
        table = read_string_table(fh)
        vec_bytes = dim * 4
        while True:
            raw = fh.read(_ENTRY_HEAD.size)
            if not raw:
                break
            if len(raw) < _ENTRY_HEAD.size:
                raise StreamTruncatedError("truncated store entry header")
            word_ref, scope_ref, count = _ENTRY_HEAD.unpack(raw)
            raw_vec = fh.read(vec_bytes)
            if len(raw_vec) < vec_bytes:
                raise StreamTruncatedError("truncated store entry vector")
            word = table.resolve(word_ref)
            scope = table.resolve(scope_ref)
            store = stores.get(scope)
            if store is None:
                store = stores[scope] = RepresentationStore(scope=scope, dim=dim)
            store.words[word] = (np.frombuffer(raw_vec, dtype="<f4").copy(), count)
    return stores


def load_store_files(paths) -> dict[str, RepresentationStore]:
    """Read several TSR1 files; a scope may not appear in more than one."""
    merged: dict[str, RepresentationStore] = {}
    for path in paths:
        for scope, store in read_stores(path).items():
            if scope in merged:
                raise StreamFormatError(f"scope {scope!r} appears in more than one store file")
            merged[scope] = store
    return merged


def export_stores_csv(stores: Iterable[RepresentationStore], path) -> int:
    """Write ``word,scope,count,v0,...`` rows; returns the row count."""
    ordered = sorted(stores, key=lambda s: s.scope)
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        dim = ordered[0].dim if ordered else 0
        fh.write("word,scope,count," + ",".join(f"v{i}" for i in range(dim)) + "\n")
        for store in ordered:
            for word in sorted(store.words):
                vec, count = store.words[word]
                cells = ",".join(repr(float(x)) for x in vec)
                fh.write(f"{_csv_quote(word)},{_csv_quote(store.scope)},{count},{cells}\n")
                n += 1
    return n


def _csv_quote(value: str) -> str:
    if any(ch in value for ch in ',"\n'):
        return '"' + value.replace('"', '""') + '"'
    return value
