"""Time-stamped corpus ingestion, preprocessing and period assignment.

A corpus is a JSON-lines file, one document per line with keys ``id``,
``date`` (ISO-8601 calendar date), optional ``lang``, ``title`` and
``body``. Documents are binned into configured, non-overlapping
``[start, end)`` time periods; documents outside every period are
counted and skipped by callers, never treated as errors.
"""

from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass
from datetime import date, timedelta
from pathlib import Path
from typing import Iterable, Iterator, Sequence

from .errors import ConfigError, CorpusFormatError

GLOBAL_SCOPE = "GLOBAL"

# http(s) scheme or a leading www., up to the next whitespace
_URL_RE = re.compile(r"(?:https?://|www\.)\S*", re.IGNORECASE)
_WS_RE = re.compile(r"\s+")


@dataclass(frozen=True)
class Document:
    id: str
    date: date
    title: str
    body: str
    lang: str | None = None

    @property
    def text(self) -> str:
        """Title and body joined by a single newline."""
        return f"{self.title}\n{self.body}"


@dataclass(frozen=True)
class PeriodConfig:
    """One time span, ``start`` inclusive, ``end`` exclusive."""

    label: str
    start: date
    end: date


@dataclass(frozen=True)
class PreprocessRules:
    strip_urls: bool = True
    lowercase: bool = False


def _parse_date(raw, line_no=None) -> date:
    if not isinstance(raw, str):
        raise CorpusFormatError(f"date must be an ISO string, got {raw!r}", line_no)
    try:
        return date.fromisoformat(raw)
    except ValueError as exc:
        raise CorpusFormatError(f"bad date {raw!r}: {exc}", line_no) from None


def load_corpus(path) -> Iterator[Document]:
    """Yield documents from a JSON-lines corpus file, in file order.

    Blank lines are skipped. Malformed lines and duplicate ids raise
    ``CorpusFormatError`` carrying the 1-based line number.
    """
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"invalid JSON: {exc}", line_no) from None
            if not isinstance(record, dict):
                raise CorpusFormatError("record is not an object", line_no)
            for key in ("id", "date", "title", "body"):
                if key not in record:
                    raise CorpusFormatError(f"missing key {key!r}", line_no)
            doc_id = record["id"]
            if not isinstance(doc_id, str) or not doc_id:
                raise CorpusFormatError(f"id must be a non-empty string, got {doc_id!r}", line_no)
            if doc_id in seen:
                raise CorpusFormatError(f"duplicate document id {doc_id!r}", line_no)
            seen.add(doc_id)
            lang = record.get("lang")
            if lang is not None and not isinstance(lang, str):
                raise CorpusFormatError(f"lang must be a string, got {lang!r}", line_no)
            yield Document(
                id=doc_id,
                date=_parse_date(record["date"], line_no),
                title=str(record["title"]),
                body=str(record["body"]),
                lang=lang,
            )


def validate_periods(periods: Sequence[PeriodConfig]) -> list[PeriodConfig]:
    """Check period invariants and return the periods sorted by start.

    Raises ``ConfigError`` on empty span, duplicate label, overlap, or a
    label colliding with the reserved global scope name.
    """
    if not periods:
        raise ConfigError("period config is empty")
    labels = [p.label for p in periods]
    if len(set(labels)) != len(labels):
        raise ConfigError(f"duplicate period labels: {sorted(labels)}")
    for p in periods:
        if p.label == GLOBAL_SCOPE:
            raise ConfigError(f"period label {GLOBAL_SCOPE!r} is reserved")
        if not p.label:
            raise ConfigError("empty period label")
        if not p.start < p.end:
            raise ConfigError(f"period {p.label!r}: start {p.start} must precede end {p.end}")
    ordered = sorted(periods, key=lambda p: p.start)
    for prev, cur in zip(ordered, ordered[1:]):
        if cur.start < prev.end:
            raise ConfigError(f"periods {prev.label!r} and {cur.label!r} overlap")
    return ordered


def assign_period(doc: Document, periods: Sequence[PeriodConfig]) -> str | None:
    """Return the label of the period whose ``[start, end)`` holds the doc date."""
    for p in periods:
        if p.start <= doc.date < p.end:
            return p.label
    return None


def preprocess(text: str, rules: PreprocessRules) -> str:
    """Apply the configured light preprocessing to raw text.

    URL stripping removes every maximal ``http://``/``https://``/``www.``
    substring up to the next whitespace and collapses whitespace runs to
    a single space; the result is idempotent.
    """
    if rules.strip_urls:
        text = _URL_RE.sub(" ", text)
        text = _WS_RE.sub(" ", text).strip()
    if rules.lowercase:
        text = text.lower()
    return text


def shuffle(docs: Iterable[Document], seed: int) -> list[Document]:
    """Deterministic Fisher-Yates permutation of ``docs``.

    Driven by the Mersenne Twister generator seeded with ``seed``, so the
    same input and seed always produce the same order.
    """
    out = list(docs)
    random.Random(seed).shuffle(out)
    return out


def _years(label_to_span: dict[str, tuple[str, str]]) -> list[PeriodConfig]:
    return [
        PeriodConfig(label, date.fromisoformat(start), date.fromisoformat(end))
        for label, (start, end) in label_to_span.items()
    ]


# Shipped period presets. End dates are exclusive: a span printed as
# "... - 23.6.2016" covers dates up to and including 2016-06-23.
PRESETS: dict[str, list[PeriodConfig]] = {
    "liverpoolfc": _years(
        {
            "2013": ("2011-01-01", "2014-01-01"),
            "2017": ("2017-01-01", "2018-01-01"),
        }
    ),
    "brexit": _years(
        {
            "pre-referendum": ("2011-01-01", "2016-06-24"),
            "year1": ("2016-06-24", "2017-06-24"),
            "year2": ("2017-06-24", "2018-06-24"),
            "year3": ("2018-06-24", "2019-06-24"),
            "year4": ("2019-06-24", "2019-08-24"),
        }
    ),
    "immigration": _years(
        {str(y): (f"{y}-01-01", f"{y + 1}-01-01") for y in range(2015, 2020)}
    ),
}


def get_preset(name: str) -> list[PeriodConfig]:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(
            f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}"
        ) from None


def load_periods(path) -> list[PeriodConfig]:
    """Load and validate a JSON period config: a list of {label, start, end}."""
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    return periods_from_obj(raw)


def periods_from_obj(raw) -> list[PeriodConfig]:
    """Build validated periods from already-parsed JSON data."""
    if not isinstance(raw, list):
        raise ConfigError("period config must be a JSON array of {label, start, end}")
    periods = []
    for entry in raw:
        try:
            periods.append(
                PeriodConfig(
                    label=str(entry["label"]),
                    start=date.fromisoformat(entry["start"]),
                    end=date.fromisoformat(entry["end"]),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad period entry {entry!r}: {exc}") from None
    return validate_periods(periods)


def period_span(periods: Sequence[PeriodConfig]) -> tuple[date, date]:
    """Overall [earliest start, latest end) covered by the config."""
    return min(p.start for p in periods), max(p.end for p in periods)


def random_dates(start: date, end: date, n: int, seed: int) -> list[date]:
    """n reproducible dates uniform in [start, end); test/synth helper."""
    rng = random.Random(seed)
    span = (end - start).days
    return [start + timedelta(days=rng.randrange(span)) for _ in range(n)]
