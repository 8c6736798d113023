"""Diachronic semantic shift detection from contextual token embeddings."""

from .aggregate import (
    MeanAccumulator,
    RepresentationBuilder,
    RepresentationStore,
    build_representations,
    reconstruct_word,
)
from .corpus import Document, PeriodConfig, PreprocessRules, assign_period, load_corpus, preprocess
from .embedding_io import SequenceBlock, StreamHeader, combine_layers, read_stream, write_stream
from .evaluation import EvalReport, GoldRecord, SynthSpec, evaluate, pearson, synth_stream
from .shift import (
    NeighborSet,
    ShiftScore,
    Trajectory,
    cosine_similarity,
    levenshtein,
    meaning_change,
    neighbors,
    norm_levenshtein,
    shift_score,
    trajectory,
)
from .tokenizer import TokenizedSequence, Vocab, chunk, pre_tokenize, wordpiece_tokenize

__version__ = "0.1.0"

__all__ = [
    "Document",
    "EvalReport",
    "GoldRecord",
    "MeanAccumulator",
    "NeighborSet",
    "PeriodConfig",
    "PreprocessRules",
    "RepresentationBuilder",
    "RepresentationStore",
    "SequenceBlock",
    "ShiftScore",
    "StreamHeader",
    "SynthSpec",
    "TokenizedSequence",
    "Trajectory",
    "Vocab",
    "assign_period",
    "build_representations",
    "chunk",
    "combine_layers",
    "cosine_similarity",
    "evaluate",
    "levenshtein",
    "load_corpus",
    "meaning_change",
    "neighbors",
    "norm_levenshtein",
    "pearson",
    "pre_tokenize",
    "preprocess",
    "read_stream",
    "reconstruct_word",
    "shift_score",
    "synth_stream",
    "trajectory",
    "wordpiece_tokenize",
    "write_stream",
]
