"""Shift quantification: cosine scores, filtered neighbors, trajectories.

The amount of meaning change of a word between two time periods is the
cosine distance between its two period representations. Neighbor search
ranks the whole store by cosine similarity to a target after discarding
spelling near-duplicates (normalized Levenshtein above a threshold),
which removes morphological derivatives of the target.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .aggregate import RepresentationStore
from .errors import DegenerateDataError, WordNotFoundError

# filters uninformative "words" (pure punctuation/digits) at query time
DEFAULT_WORD_EXCLUDE = re.compile(r"^[\W\d_]+$")


@dataclass(frozen=True)
class ShiftScore:
    word: str
    period_a: str
    period_b: str
    distance: float
    count_a: int
    count_b: int


@dataclass(frozen=True)
class NeighborEntry:
    word: str
    similarity: float
    norm_ld: float


@dataclass(frozen=True)
class NeighborSet:
    target: str
    entries: tuple[NeighborEntry, ...]


@dataclass(frozen=True)
class TrajectoryPoint:
    period: str
    similarity: float


@dataclass(frozen=True)
class Trajectory:
    target: str
    seed: str
    points: tuple[TrajectoryPoint, ...]
    missing_periods: tuple[str, ...] = ()
    warning: str | None = None


def cosine_similarity(u, v) -> float:
    """Cosine of the angle between two vectors, in [-1, 1].

    Computed in float64 and clamped against rounding; zero-norm input is
    an error because the direction is undefined.
    """
    a = np.asarray(u, dtype=np.float64)
    b = np.asarray(v, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dim mismatch: {a.shape} vs {b.shape}")
    norm_a = float(np.linalg.norm(a))
    norm_b = float(np.linalg.norm(b))
    if norm_a == 0.0 or norm_b == 0.0:
        raise DegenerateDataError("cosine similarity of a zero-norm vector is undefined")
    if np.array_equal(a, b):
        return 1.0
    return float(np.clip(float(np.dot(a, b)) / (norm_a * norm_b), -1.0, 1.0))


def cosine_distance(u, v) -> float:
    return 1.0 - cosine_similarity(u, v)


def _require(store_map: Mapping[str, RepresentationStore], word: str, scope: str):
    store = store_map.get(scope)
    if store is None or word not in store:
        raise WordNotFoundError(word, scope)
    return store.words[word]


def shift_score(
    word: str,
    period_a: str,
    period_b: str,
    stores: Mapping[str, RepresentationStore],
) -> ShiftScore:
    """Cosine distance between a word's two period representations."""
    vec_a, count_a = _require(stores, word, period_a)
    vec_b, count_b = _require(stores, word, period_b)
    return ShiftScore(
        word=word,
        period_a=period_a,
        period_b=period_b,
        distance=cosine_distance(vec_a, vec_b),
        count_a=count_a,
        count_b=count_b,
    )


def rank_shifts(
    period_a: str,
    period_b: str,
    stores: Mapping[str, RepresentationStore],
    words: Sequence[str] | None = None,
    word_filter: Callable[[str], bool] | None = None,
) -> list[ShiftScore]:
    """Shift scores for all words present in both periods, largest first.

    ``word_filter`` keeps a word when it returns True; by default pure
    punctuation/digit tokens are dropped. Ties break lexicographically.
    """
    store_a = stores.get(period_a)
    store_b = stores.get(period_b)
    if store_a is None:
        raise WordNotFoundError("*", period_a)
    if store_b is None:
        raise WordNotFoundError("*", period_b)
    if words is None:
        candidates = sorted(set(store_a.words) & set(store_b.words))
    else:
        candidates = list(words)
    if word_filter is None:
        word_filter = default_word_filter
    scores = [
        shift_score(w, period_a, period_b, stores) for w in candidates if word_filter(w)
    ]
    scores.sort(key=lambda s: (-s.distance, s.word))
    return scores


def default_word_filter(word: str) -> bool:
    return not DEFAULT_WORD_EXCLUDE.match(word)


def levenshtein(a: str, b: str, casefold: bool = False) -> int:
    """Minimal insert/delete/substitute count between two strings."""
    if casefold:
        a = a.casefold()
        b = b.casefold()
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ch_a in enumerate(a, start=1):
        cur = [i]
        for j, ch_b in enumerate(b, start=1):
            cost = 0 if ch_a == ch_b else 1
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + cost))
        prev = cur
    return prev[-1]


def norm_levenshtein(a: str, b: str, casefold: bool = False) -> float:
    """Normalized Levenshtein similarity, 1 - LD / max(len); 1.0 when equal.

    High values mean near-identical spellings (e.g. a derivative of the
    same stem); two empty strings score 1.0 by definition.
    """
    longest = max(len(a), len(b))
    if longest == 0:
        return 1.0
    return 1.0 - levenshtein(a, b, casefold) / longest


def neighbors(
    target: str,
    global_store: RepresentationStore,
    k: int = 50,
    threshold: float = 0.5,
    word_filter: Callable[[str], bool] | None = None,
) -> NeighborSet:
    """Top-k most cosine-similar words to the target's global representation.

    Candidates whose normalized Levenshtein similarity to the target
    exceeds ``threshold`` are discarded as spelling derivatives; the
    target itself is never a candidate. Ranking is similarity descending
    with lexicographic tie-break, so results are deterministic.
    """
    if target not in global_store:
        raise WordNotFoundError(target, global_store.scope)
    if word_filter is None:
        word_filter = default_word_filter
    target_vec = global_store.vector(target)
    candidates = [
        w
        for w in global_store.words
        if w != target and word_filter(w) and norm_levenshtein(target, w) <= threshold
    ]
    if not candidates:
        return NeighborSet(target=target, entries=())
    matrix = np.stack([global_store.vector(w) for w in candidates]).astype(np.float64)
    norms = np.linalg.norm(matrix, axis=1)
    t64 = np.asarray(target_vec, dtype=np.float64)
    t_norm = float(np.linalg.norm(t64))
    if t_norm == 0.0:
        raise DegenerateDataError(f"target {target!r} has a zero-norm representation")
    valid = norms > 0.0
    sims = np.full(len(candidates), -np.inf)
    sims[valid] = np.clip((matrix[valid] @ t64) / (norms[valid] * t_norm), -1.0, 1.0)
    order = sorted(range(len(candidates)), key=lambda i: (-sims[i], candidates[i]))
    entries = tuple(
        NeighborEntry(
            word=candidates[i],
            similarity=float(sims[i]),
            norm_ld=norm_levenshtein(target, candidates[i]),
        )
        for i in order[:k]
        if np.isfinite(sims[i])
    )
    return NeighborSet(target=target, entries=entries)


def meaning_change(
    target: str,
    seed: str,
    first_period: str,
    last_period: str,
    stores: Mapping[str, RepresentationStore],
) -> float:
    """Absolute change of target-seed cosine similarity between two periods."""
    t_first, _ = _require(stores, target, first_period)
    s_first, _ = _require(stores, seed, first_period)
    t_last, _ = _require(stores, target, last_period)
    s_last, _ = _require(stores, seed, last_period)
    return abs(cosine_similarity(t_first, s_first) - cosine_similarity(t_last, s_last))


def trajectory(
    target: str,
    seed: str,
    periods: Sequence[str],
    stores: Mapping[str, RepresentationStore],
) -> Trajectory:
    """Target-seed cosine similarity per period, in the given period order.

    Periods where either word is missing are omitted and listed; fewer
    than two remaining points degrades to a warning, not an error.
    """
    points: list[TrajectoryPoint] = []
    missing: list[str] = []
    for period in periods:
        store = stores.get(period)
        if store is None or target not in store or seed not in store:
            missing.append(period)
            continue
        points.append(
            TrajectoryPoint(
                period=period,
                similarity=cosine_similarity(store.vector(target), store.vector(seed)),
            )
        )
    warning = None
    if len(points) < 2:
        warning = (
            f"only {len(points)} period(s) hold both {target!r} and {seed!r}; "
            "no trajectory to speak of"
        )
    return Trajectory(
        target=target,
        seed=seed,
        points=tuple(points),
        missing_periods=tuple(missing),
        warning=warning,
    )


def top_changed_neighbors(
    target: str,
    neighbor_set: NeighborSet,
    first_period: str,
    last_period: str,
    stores: Mapping[str, RepresentationStore],
    m: int = 10,
) -> list[tuple[str, float]]:
    """The m neighbors whose similarity to the target changed the most.

    Neighbors missing a representation in either period are skipped.
    Returns (word, change) pairs, change descending, ties lexicographic.
    """
    changes: list[tuple[str, float]] = []
    for entry in neighbor_set.entries:
        try:
            mc = meaning_change(target, entry.word, first_period, last_period, stores)
        except WordNotFoundError:
            continue
        changes.append((entry.word, mc))
    changes.sort(key=lambda pair: (-pair[1], pair[0]))
    return changes[:m]
