"""Exception hierarchy shared across the pipeline.

``ConfigError`` maps to CLI exit code 2, everything else derived from
``SemShiftError`` maps to exit code 1.
"""


class SemShiftError(Exception):
    """Base class for all pipeline errors."""


class ConfigError(SemShiftError):
    """Invalid configuration: bad period layout, unknown preset, bad flag."""


class CorpusFormatError(SemShiftError):
    """Malformed corpus or gold-standard record."""

    def __init__(self, message, line_no=None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class VocabError(SemShiftError):
    """Invalid subword vocabulary file."""


class OversizedWordError(SemShiftError):
    """A single word produced more subword pieces than the chunk limit."""

    def __init__(self, word, n_pieces, limit):
        super().__init__(
            f"word {word!r} tokenizes to {n_pieces} pieces, above the chunk limit {limit}"
        )
        self.word = word


class StreamFormatError(SemShiftError):
    """Bad magic, version, dtype or structural field in a binary stream."""


class StreamCorruptionError(SemShiftError):
    """Checksum failure in a stream block."""

    def __init__(self, block_ordinal, message="CRC mismatch"):
        super().__init__(f"block {block_ordinal}: {message}")
        self.block_ordinal = block_ordinal


class StreamTruncatedError(SemShiftError):
    """Stream ended in the middle of a header or block."""


class WordNotFoundError(SemShiftError):
    """A requested word is absent from a representation store."""

    def __init__(self, word, scope):
        super().__init__(f"word {word!r} not found in store {scope!r}")
        self.word = word
        self.scope = scope


class InsufficientDataError(SemShiftError):
    """Fewer data points than the statistic requires."""


class DegenerateDataError(SemShiftError):
    """Zero variance or zero norm where a ratio is needed."""
