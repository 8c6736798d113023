"""Greedy longest-match subword tokenization and length-limited chunking.

Words are split against a fixed vocabulary (one token per line, line
number = id, continuation pieces prefixed ``##``). Token sequences are
chunked to the encoder's content limit without ever splitting a word
across chunks, and every subword token keeps the ordinal and surface of
the word it came from so word vectors can be reconstructed downstream.
"""

from __future__ import annotations

import json
import unicodedata
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

from .errors import OversizedWordError, VocabError

CONTINUATION_PREFIX = "##"
CLS_TOKEN = "[CLS]"
SEP_TOKEN = "[SEP]"
UNK_TOKEN = "[UNK]"
PAD_TOKEN = "[PAD]"
SPECIAL_TOKENS = (CLS_TOKEN, SEP_TOKEN, UNK_TOKEN, PAD_TOKEN)

# 256 model positions minus the [CLS]/[SEP] slots added by the encoder
DEFAULT_CONTENT_LIMIT = 254


@dataclass(frozen=True)
class Vocab:
    """Immutable token->id map with the four required special tokens."""

    token_to_id: dict[str, int]
    cls_id: int = field(init=False)
    sep_id: int = field(init=False)
    unk_id: int = field(init=False)
    pad_id: int = field(init=False)

    def __post_init__(self):
        for tok in SPECIAL_TOKENS:
            if tok not in self.token_to_id:
                raise VocabError(f"special token {tok} missing from vocabulary")
        ids = sorted(self.token_to_id.values())
        if ids != list(range(len(ids))):
            raise VocabError("token ids are not dense in [0, size)")
        object.__setattr__(self, "cls_id", self.token_to_id[CLS_TOKEN])
        object.__setattr__(self, "sep_id", self.token_to_id[SEP_TOKEN])
        object.__setattr__(self, "unk_id", self.token_to_id[UNK_TOKEN])
        object.__setattr__(self, "pad_id", self.token_to_id[PAD_TOKEN])

    def __len__(self) -> int:
        return len(self.token_to_id)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id

    @classmethod
    def from_tokens(cls, tokens: Iterable[str]) -> "Vocab":
        mapping: dict[str, int] = {}
        for idx, token in enumerate(tokens):
            if token in mapping:
                raise VocabError(f"duplicate vocabulary entry {token!r} at id {idx}")
            mapping[token] = idx
        return cls(mapping)


def load_vocab(path) -> Vocab:
    """Load a plain-text vocabulary, one token per line, line number = id."""
    with open(path, encoding="utf-8") as fh:
        tokens = [line.rstrip("\n") for line in fh]
    while tokens and tokens[-1] == "":
        tokens.pop()
    return Vocab.from_tokens(tokens)


def _is_punctuation(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def pre_tokenize(text: str, lowercase: bool) -> list[str]:
    """Split text into words: whitespace split, punctuation isolated.

    With ``lowercase`` the text is Unicode-lowercased first, which also
    fixes the surface form used as the word key downstream.
    """
    if lowercase:
        text = text.lower()
    words: list[str] = []
    for token in text.split():
        start = 0
        for i, ch in enumerate(token):
            if _is_punctuation(ch):
                if start < i:
                    words.append(token[start:i])
                words.append(ch)
                start = i + 1
        if start < len(token):
            words.append(token[start:])
    return words


def wordpiece_tokenize(word: str, vocab: Vocab) -> list[int]:
    """Greedy longest-match-first subword split of a single word.

    Repeatedly takes the longest vocabulary entry matching a prefix of
    the remaining characters (continuation pieces carry the ``##``
    prefix). If no entry matches at some position the whole word
    degrades to ``[[UNK] id]``.
    """
    if not word:
        raise ValueError("cannot tokenize an empty word")
    pieces: list[int] = []
    start = 0
    while start < len(word):
        end = len(word)
        piece_id = None
        while start < end:
            piece = word[start:end]
            if start > 0:
                piece = CONTINUATION_PREFIX + piece
            if piece in vocab:
                piece_id = vocab.token_to_id[piece]
                break
            end -= 1
        if piece_id is None:
            return [vocab.unk_id]
        pieces.append(piece_id)
        start = end
    return pieces


@dataclass
class TokenizedSequence:
    """One encoder-ready chunk of subword tokens with word alignment.

    The three arrays are parallel, one entry per token: ``word_instances``
    holds the per-document ordinal of the word a token belongs to (tokens
    of one word are contiguous and share the ordinal), ``word_surfaces``
    the word's surface form.
    """

    doc_id: str
    period_label: str
    token_ids: list[int]
    word_instances: list[int]
    word_surfaces: list[str]

    def __len__(self) -> int:
        return len(self.token_ids)

    def to_json(self) -> str:
        return json.dumps(
            {
                "doc_id": self.doc_id,
                "period_label": self.period_label,
                "token_ids": self.token_ids,
                "word_instances": self.word_instances,
                "word_surfaces": self.word_surfaces,
            },
            ensure_ascii=False,
        )

    @classmethod
    def from_json(cls, line: str) -> "TokenizedSequence":
        obj = json.loads(line)
        return cls(
            doc_id=obj["doc_id"],
            period_label=obj["period_label"],
            token_ids=list(obj["token_ids"]),
            word_instances=list(obj["word_instances"]),
            word_surfaces=list(obj["word_surfaces"]),
        )


def chunk(
    word_pieces: Sequence[tuple[str, list[int]]],
    doc_id: str,
    period_label: str,
    limit: int = DEFAULT_CONTENT_LIMIT,
) -> list[TokenizedSequence]:
    """Greedily pack (word, piece ids) pairs into chunks of <= limit tokens.

    A word's pieces are never split across chunks; a word that alone
    exceeds the limit raises ``OversizedWordError``.
    """
    if limit < 1:
        raise ValueError(f"chunk limit must be >= 1, got {limit}")
    chunks: list[TokenizedSequence] = []
    cur = TokenizedSequence(doc_id, period_label, [], [], [])
    for instance, (word, pieces) in enumerate(word_pieces):
        if len(pieces) > limit:
            raise OversizedWordError(word, len(pieces), limit)
        if len(cur) + len(pieces) > limit:
            chunks.append(cur)
            cur = TokenizedSequence(doc_id, period_label, [], [], [])
        cur.token_ids.extend(pieces)
        cur.word_instances.extend([instance] * len(pieces))
        cur.word_surfaces.extend([word] * len(pieces))
    if len(cur):
        chunks.append(cur)
    return chunks


def tokenize_document(
    text: str,
    doc_id: str,
    period_label: str,
    vocab: Vocab,
    lowercase: bool,
    limit: int = DEFAULT_CONTENT_LIMIT,
) -> list[TokenizedSequence]:
    """Full text -> chunked subword sequences for one document."""
    words = pre_tokenize(text, lowercase)
    word_pieces = [(w, wordpiece_tokenize(w, vocab)) for w in words]
    return chunk(word_pieces, doc_id, period_label, limit)


def write_manifest(sequences: Iterable[TokenizedSequence], path) -> int:
    """Write sequences as manifest JSONL; returns the number of lines."""
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for seq in sequences:
            fh.write(seq.to_json())
            fh.write("\n")
            n += 1
    return n


def read_manifest(path) -> Iterator[TokenizedSequence]:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                yield TokenizedSequence.from_json(line)
