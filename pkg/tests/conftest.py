import random

import numpy as np
import pytest

from semshift.embedding_io import SequenceBlock, StreamHeader, StringTable
from semshift.tokenizer import SPECIAL_TOKENS, Vocab


@pytest.fixture
def tiny_vocab() -> Vocab:
    pieces = [
        *SPECIAL_TOKENS,
        "un", "##aff", "##able", "##aff", "hello", ",", "world", "a", "b", "c",
        "##a", "##b", "##c", "deal", "brexit",
    ]
    # drop the accidental duplicate above while keeping order
    seen, ordered = set(), []
    for p in pieces:
        if p not in seen:
            seen.add(p)
            ordered.append(p)
    return Vocab.from_tokens(ordered)


def make_stream(records, dim, layer_count=1, blocks_of=4, strings=None):
    """Build (header, blocks) from (word, period, vector-or-(L,dim)) records.

    Each record is one single-piece word usage. Consecutive records of
    the same period are packed into blocks of up to ``blocks_of``.
    """
    strings = strings if strings is not None else StringTable()
    header = StreamHeader(dim=dim, layer_count=layer_count, strings=strings)
    blocks = []
    group: list = []

    def flush():
        if not group:
            return
        words, vectors = [], []
        for word, _, vec in group:
            arr = np.asarray(vec, dtype=np.float32)
            if arr.ndim == 1:
                arr = arr[np.newaxis, :]
            assert arr.shape == (layer_count, dim)
            words.append(word)
            vectors.append(arr)
        blocks.append(
            SequenceBlock.build(
                strings,
                doc_id=f"doc{len(blocks)}",
                period_label=group[0][1],
                words=words,
                word_instances=list(range(len(group))),
                token_ids=[7] * len(group),
                vectors=np.stack(vectors),
            )
        )
        group.clear()

    for record in records:
        if group and (record[1] != group[0][1] or len(group) >= blocks_of):
            flush()
        group.append(record)
    flush()
    return header, blocks


def fuzz_records(rng: random.Random, n, dim, periods=("p1", "p2"), magnitude=10.0):
    """Random single-piece usage records for aggregation fuzzing."""
    words = [f"t{i}" for i in range(max(2, n // 6))]
    out = []
    for _ in range(n):
        vec = [rng.uniform(-magnitude, magnitude) for _ in range(dim)]
        out.append((rng.choice(words), rng.choice(periods), vec))
    return out
