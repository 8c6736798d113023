"""Gold-standard evaluation and the synthetic end-to-end oracle.

Model shift scores are compared against a human-annotated shift index
(TSV ``word<TAB>index`` with index in [0, 1]) via Pearson correlation;
significance comes from the Student-t transform or, as an independent
cross-check, a seeded permutation test.

``synth_stream`` generates an embedding stream with a known ground
truth: every word gets a fixed random unit direction, usages are that
direction plus Gaussian noise, and planted words have their direction
rotated by a chosen angle in the second period. Running the real
aggregation/shift pipeline over it must recover the planted words.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import stats as scipy_stats

from .aggregate import RepresentationStore
from .errors import (
    ConfigError,
    CorpusFormatError,
    DegenerateDataError,
    InsufficientDataError,
)
from .embedding_io import SequenceBlock, StreamHeader, StringTable
from .shift import shift_score

P_VALUE_T_DIST = "t-dist"
P_VALUE_PERMUTATION = "permutation"

SYNTH_PERIOD_EARLY = "early"
SYNTH_PERIOD_LATE = "late"


@dataclass(frozen=True)
class GoldRecord:
    word: str
    shift_index: float


@dataclass
class EvalReport:
    n_evaluated: int
    n_missing: int
    missing: list[str]
    pearson_r: float
    p_value: float
    method: str
    pairs: list[tuple[str, float, float]]  # (word, gold index, model distance)

    def to_dict(self) -> dict:
        return {
            "n_evaluated": self.n_evaluated,
            "n_missing": self.n_missing,
            "missing": self.missing,
            "pearson_r": self.pearson_r,
            "p_value": self.p_value,
            "method": self.method,
            "pairs": [
                {"word": w, "gold": g, "distance": d} for w, g, d in self.pairs
            ],
        }


def load_gold(path) -> list[GoldRecord]:
    """Parse a TSV gold file (header optional) into validated records."""
    records: list[GoldRecord] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise CorpusFormatError(
                    f"expected two tab-separated columns, got {len(parts)}", line_no
                )
            word, raw_index = parts[0].strip(), parts[1].strip()
            if line_no == 1 and not _is_float(raw_index):
                continue  # header row
            try:
                index = float(raw_index)
            except ValueError:
                raise CorpusFormatError(f"bad shift index {raw_index!r}", line_no) from None
            if not 0.0 <= index <= 1.0:
                raise CorpusFormatError(
                    f"shift index {index} outside [0, 1] for {word!r}", line_no
                )
            if word in seen:
                raise CorpusFormatError(f"duplicate gold word {word!r}", line_no)
            seen.add(word)
            records.append(GoldRecord(word=word, shift_index=index))
    return records


def _is_float(raw: str) -> bool:
    try:
        float(raw)
        return True
    except ValueError:
        return False


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    """Product-moment correlation coefficient, float64 arithmetic."""
    xa = np.asarray(x, dtype=np.float64)
    ya = np.asarray(y, dtype=np.float64)
    if xa.shape != ya.shape or xa.ndim != 1:
        raise ValueError(f"mismatched samples: {xa.shape} vs {ya.shape}")
    n = xa.shape[0]
    if n < 3:
        raise InsufficientDataError(f"need at least 3 pairs, got {n}")
    dx = xa - xa.mean()
    dy = ya - ya.mean()
    var_x = float(np.dot(dx, dx))
    var_y = float(np.dot(dy, dy))
    if var_x == 0.0 or var_y == 0.0:
        raise DegenerateDataError("zero variance in one of the variables")
    r = float(np.dot(dx, dy)) / math.sqrt(var_x * var_y)
    return max(-1.0, min(1.0, r))


def p_value(
    r: float,
    n: int,
    method: str = P_VALUE_T_DIST,
    data: tuple[Sequence[float], Sequence[float]] | None = None,
    n_permutations: int = 10_000,
    seed: int = 0,
) -> float:
    """Two-sided p-value for a correlation of ``r`` over ``n`` pairs.

    ``t-dist`` uses t = r*sqrt((n-2)/(1-r^2)) against Student's t with
    n-2 degrees of freedom. ``permutation`` reshuffles the y side of the
    supplied ``data`` ``n_permutations`` times (seeded) and counts
    |r_perm| >= |r|, with add-one smoothing.
    """
    if n < 3:
        raise InsufficientDataError(f"need at least 3 pairs, got {n}")
    if abs(r) > 1.0:
        raise ValueError(f"|r| must be <= 1, got {r}")
    if method == P_VALUE_T_DIST:
        if abs(r) == 1.0:
            return 0.0
        t = r * math.sqrt((n - 2) / (1.0 - r * r))
        return 2.0 * float(scipy_stats.t.sf(abs(t), df=n - 2))
    if method == P_VALUE_PERMUTATION:
        if data is None:
            raise ValueError("permutation method needs the sample pairs as data=(x, y)")
        return permutation_p_value(
            data[0], data[1], r_observed=r, n_permutations=n_permutations, seed=seed
        )
    raise ConfigError(f"unknown p-value method {method!r}")


def permutation_p_value(
    x: Sequence[float],
    y: Sequence[float],
    r_observed: float | None = None,
    n_permutations: int = 10_000,
    seed: int = 0,
) -> float:
    """Seeded permutation test of the correlation between x and y.

    Counts permutations with |r| at least as extreme as observed;
    add-one smoothing keeps the estimate strictly positive.
    """
    xa = np.asarray(x, dtype=np.float64)
    ya = np.asarray(y, dtype=np.float64)
    if r_observed is None:
        r_observed = pearson(xa, ya)
    n = xa.shape[0]
    if n < 3:
        raise InsufficientDataError(f"need at least 3 pairs, got {n}")
    dx = xa - xa.mean()
    dy = ya - ya.mean()
    denom_x = float(np.dot(dx, dx))
    denom_y = float(np.dot(dy, dy))
    if denom_x == 0.0 or denom_y == 0.0:
        raise DegenerateDataError("zero variance in one of the variables")
    scale = math.sqrt(denom_x * denom_y)
    rng = np.random.default_rng(seed)
    hits = 0
    threshold = abs(r_observed) - 1e-12  # tolerate float jitter at equality
    for _ in range(n_permutations):
        r_perm = float(np.dot(dx, rng.permutation(dy))) / scale
        if abs(r_perm) >= threshold:
            hits += 1
    return (hits + 1) / (n_permutations + 1)


def evaluate(
    stores: Mapping[str, RepresentationStore],
    gold: Sequence[GoldRecord],
    period_a: str,
    period_b: str,
    method: str = P_VALUE_T_DIST,
    casefold: bool = True,
    seed: int = 0,
) -> EvalReport:
    """Correlate model shift distances with the gold shift index.

    Gold words missing from either period store are excluded from the
    correlation but reported. ``casefold`` must match the case handling
    the stores were built with.
    """
    store_a = stores.get(period_a)
    store_b = stores.get(period_b)
    if store_a is None or store_b is None:
        missing_scope = period_a if store_a is None else period_b
        raise ConfigError(f"no representation store for period {missing_scope!r}")
    pairs: list[tuple[str, float, float]] = []
    missing: list[str] = []
    for record in gold:
        word = record.word.casefold() if casefold else record.word
        if word not in store_a or word not in store_b:
            missing.append(record.word)
            continue
        score = shift_score(word, period_a, period_b, stores)
        pairs.append((record.word, record.shift_index, score.distance))
    if len(pairs) < 3:
        raise InsufficientDataError(
            f"only {len(pairs)} gold words evaluable (need >= 3); missing: {missing}"
        )
    gold_values = [g for _, g, _ in pairs]
    distances = [d for _, _, d in pairs]
    r = pearson(gold_values, distances)
    p = p_value(
        r,
        len(pairs),
        method=method,
        data=(gold_values, distances),
        seed=seed,
    )
    return EvalReport(
        n_evaluated=len(pairs),
        n_missing=len(missing),
        missing=missing,
        pearson_r=r,
        p_value=p,
        method=method,
        pairs=pairs,
    )


@dataclass(frozen=True)
class SynthSpec:
    """Parameters of the synthetic planted-shift stream generator."""

    n_words: int = 20
    dim: int = 16
    usages_per_period: int = 200
    noise_sigma: float = 0.1
    n_planted: int = 1
    angle: float = math.pi / 2
    seed: int = 42

    def __post_init__(self):
        if self.dim < 2:
            raise ConfigError("synthetic dim must be >= 2")
        if self.noise_sigma < 0:
            raise ConfigError("noise sigma must be >= 0")
        if not 0.0 <= self.angle <= math.pi:
            raise ConfigError("rotation angle must lie in [0, pi]")
        if not 0 <= self.n_planted <= self.n_words:
            raise ConfigError("planted count must lie in [0, n_words]")


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def synth_stream(spec: SynthSpec) -> tuple[StreamHeader, list[SequenceBlock], list[GoldRecord]]:
    """Generate a planted-shift stream plus its gold labels.

    Words are named ``w000``... and the first ``n_planted`` are planted:
    their direction in the late period is the early direction rotated by
    ``spec.angle`` within a seeded random plane. Every usage is a
    single-piece word, one block per (word, period), layer_count 1.
    Deterministic: the same spec yields byte-identical streams.
    """
    rng = np.random.default_rng(spec.seed)
    width = max(3, len(str(max(spec.n_words - 1, 0))))
    words = [f"w{idx:0{width}d}" for idx in range(spec.n_words)]
    strings = StringTable()
    header = StreamHeader(dim=spec.dim, layer_count=1, strings=strings)
    blocks: list[SequenceBlock] = []
    gold: list[GoldRecord] = []
    for idx, word in enumerate(words):
        direction = _unit(rng.standard_normal(spec.dim))
        planted = idx < spec.n_planted
        if planted:
            # rotate within the plane spanned by direction and a random
            # orthogonal complement
            raw = rng.standard_normal(spec.dim)
            ortho = raw - np.dot(raw, direction) * direction
            ortho = _unit(ortho)
            late_direction = math.cos(spec.angle) * direction + math.sin(spec.angle) * ortho
        else:
            late_direction = direction
        for period, base in ((SYNTH_PERIOD_EARLY, direction), (SYNTH_PERIOD_LATE, late_direction)):
            usages = base + spec.noise_sigma * rng.standard_normal(
                (spec.usages_per_period, spec.dim)
            )
            blocks.append(
                SequenceBlock.build(
                    strings,
                    doc_id=f"{word}-{period}",
                    period_label=period,
                    words=[word] * spec.usages_per_period,
                    word_instances=list(range(spec.usages_per_period)),
                    token_ids=[idx] * spec.usages_per_period,
                    vectors=usages[:, np.newaxis, :].astype(np.float32),
                )
            )
        gold.append(GoldRecord(word=word, shift_index=1.0 if planted else 0.0))
    return header, blocks, gold


def write_gold(records: Sequence[GoldRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("word\tindex\n")
        for record in records:
            fh.write(f"{record.word}\t{record.shift_index}\n")
