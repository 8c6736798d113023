import random

import pytest

from semshift.errors import OversizedWordError, VocabError
from semshift.tokenizer import (
    CONTINUATION_PREFIX,
    SPECIAL_TOKENS,
    TokenizedSequence,
    Vocab,
    chunk,
    load_vocab,
    pre_tokenize,
    read_manifest,
    tokenize_document,
    wordpiece_tokenize,
    write_manifest,
)


def vocab_of(*pieces) -> Vocab:
    return Vocab.from_tokens([*SPECIAL_TOKENS, *pieces])


class TestVocab:
    def test_load_assigns_line_numbers(self, tmp_path):
        path = tmp_path / "vocab.txt"
        path.write_text("\n".join([*SPECIAL_TOKENS, "alpha", "##beta"]) + "\n")
        vocab = load_vocab(path)
        assert vocab.token_to_id["alpha"] == 4
        assert vocab.token_to_id["##beta"] == 5
        assert len(vocab) == 6

    def test_missing_special_token(self):
        with pytest.raises(VocabError, match=r"\[UNK\]"):
            Vocab.from_tokens(["[CLS]", "[SEP]", "[PAD]", "a"])

    def test_duplicate_entry(self):
        with pytest.raises(VocabError, match="duplicate"):
            Vocab.from_tokens([*SPECIAL_TOKENS, "a", "a"])


class TestPreTokenize:
    def test_lowercase_and_punct_split(self):
        assert pre_tokenize("Hello, world", lowercase=True) == ["hello", ",", "world"]

    def test_empty(self):
        assert pre_tokenize("", lowercase=True) == []

    def test_cased_whitespace_split(self):
        assert pre_tokenize("van Dijk", lowercase=False) == ["van", "Dijk"]

    def test_inner_punctuation(self):
        assert pre_tokenize("it's a no-deal.", lowercase=True) == [
            "it", "'", "s", "a", "no", "-", "deal", ".",
        ]

    def test_unicode_whitespace(self):
        assert pre_tokenize("a b\tc", lowercase=False) == ["a", "b", "c"]


class TestWordpiece:
    def test_unaffable_hand_trace(self):
        vocab = vocab_of("un", "##aff", "##able", "u", "##n")
        ids = wordpiece_tokenize("unaffable", vocab)
        id_to_token = {v: k for k, v in vocab.token_to_id.items()}
        assert [id_to_token[i] for i in ids] == ["un", "##aff", "##able"]

    def test_whole_word_match(self):
        vocab = vocab_of("deal", "d", "##e", "##a", "##l")
        assert wordpiece_tokenize("deal", vocab) == [vocab.token_to_id["deal"]]

    def test_unmatched_falls_back_to_unk(self):
        vocab = vocab_of("a", "b")
        assert wordpiece_tokenize("qqq", vocab) == [vocab.unk_id]

    def test_partial_match_still_unk(self):
        # "ab" starts fine but "c" has no continuation piece
        vocab = vocab_of("ab", "c")
        assert wordpiece_tokenize("abc", vocab) == [vocab.unk_id]

    def test_empty_word_rejected(self):
        with pytest.raises(ValueError):
            wordpiece_tokenize("", vocab_of("a"))

    def _random_vocab(self, rng):
        alphabet = "abc"
        pieces = set()
        for _ in range(rng.randint(3, 25)):
            length = rng.randint(1, 4)
            body = "".join(rng.choice(alphabet) for _ in range(length))
            pieces.add(body if rng.random() < 0.5 else CONTINUATION_PREFIX + body)
        return vocab_of(*sorted(pieces))

    def test_greedy_longest_match_property_fuzzed(self):
        rng = random.Random(37)
        for _ in range(300):
            vocab = self._random_vocab(rng)
            id_to_token = {v: k for k, v in vocab.token_to_id.items()}
            word = "".join(rng.choice("abc") for _ in range(rng.randint(1, 10)))
            ids = wordpiece_tokenize(word, vocab)
            if ids == [vocab.unk_id]:
                continue
            # brute force: longest vocab entry that prefixes the word
            prefixes = [word[:k] for k in range(len(word), 0, -1) if word[:k] in vocab]
            assert prefixes, "tokenizer found a first piece brute force cannot"
            assert id_to_token[ids[0]] == prefixes[0]

    def test_detokenization_round_trip_fuzzed(self):
        rng = random.Random(53)
        for _ in range(300):
            vocab = self._random_vocab(rng)
            id_to_token = {v: k for k, v in vocab.token_to_id.items()}
            word = "".join(rng.choice("abc") for _ in range(rng.randint(1, 10)))
            ids = wordpiece_tokenize(word, vocab)
            if ids == [vocab.unk_id]:
                continue
            surfaces = [id_to_token[i] for i in ids]
            rebuilt = surfaces[0] + "".join(
                s[len(CONTINUATION_PREFIX):] for s in surfaces[1:]
            )
            assert rebuilt == word
            assert all(s.startswith(CONTINUATION_PREFIX) for s in surfaces[1:])


class TestChunk:
    def one_piece_words(self, n):
        return [(f"w{i}", [5]) for i in range(n)]

    def test_300_words_split_254_46(self):
        chunks = chunk(self.one_piece_words(300), "d", "p", limit=254)
        assert [len(c) for c in chunks] == [254, 46]

    def test_word_never_split_at_boundary(self):
        words = self.one_piece_words(253) + [("tail", [1, 2, 3])]
        chunks = chunk(words, "d", "p", limit=254)
        assert [len(c) for c in chunks] == [253, 3]
        assert chunks[1].word_surfaces == ["tail"] * 3

    def test_empty_document(self):
        assert chunk([], "d", "p") == []

    def test_oversized_word_raises(self):
        with pytest.raises(OversizedWordError, match="monster"):
            chunk([("monster", list(range(10)))], "d", "p", limit=4)

    def test_conservation_and_bounds_fuzzed(self):
        rng = random.Random(71)
        for _ in range(100):
            limit = rng.randint(3, 20)
            words = [
                (f"w{i}", [rng.randint(4, 30) for _ in range(rng.randint(1, limit))])
                for i in range(rng.randint(0, 60))
            ]
            chunks = chunk(words, "d", "p", limit=limit)
            flat = [t for c in chunks for t in c.token_ids]
            assert flat == [t for _, pieces in words for t in pieces]
            assert all(len(c) <= limit for c in chunks)
            # word instances: non-decreasing, contiguous within a chunk
            for c in chunks:
                assert c.word_instances == sorted(c.word_instances)
                seen = set()
                prev = None
                for inst in c.word_instances:
                    if inst != prev:
                        assert inst not in seen
                        seen.add(inst)
                        prev = inst
            # instances never split across chunks
            all_instances = [set(c.word_instances) for c in chunks]
            for i, a in enumerate(all_instances):
                for b in all_instances[i + 1:]:
                    assert not (a & b)


class TestDocumentTokenization:
    def test_word_instances_span_whole_document(self, tiny_vocab):
        text = " ".join(["hello , world"] * 100)
        seqs = tokenize_document(text, "d", "p", tiny_vocab, lowercase=True, limit=7)
        instances = [i for s in seqs for i in s.word_instances]
        assert instances == sorted(instances)
        assert len(set(instances)) == 300

    def test_manifest_round_trip(self, tmp_path, tiny_vocab):
        seqs = tokenize_document("hello, world", "d9", "py", tiny_vocab, lowercase=True)
        path = tmp_path / "m.jsonl"
        assert write_manifest(seqs, path) == len(seqs)
        back = list(read_manifest(path))
        assert back == seqs
        assert isinstance(back[0], TokenizedSequence)
        assert back[0].doc_id == "d9"
        assert back[0].period_label == "py"
