"""Objective matching metrics: Hit@K%, stress matching, rhyme and extreme matches."""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

LONG_VOWELS = frozenset({"AA", "AO", "AW", "AY", "EY", "IY", "OW", "OY", "UW"})


def hit_at_k(rankings: Sequence[Sequence[str]], references: Sequence[str], k_percent: float,
             pool_sizes: Sequence[int] | None = None) -> float:
    """Share of queries whose reference sits within the top ``ceil(k% * pool)`` ranks.

    ``pool_sizes`` gives the number of original candidates per query. When
    plain distractors are mixed in they lengthen the ranking but not the
    pool, which is what makes a random ranking score K/2 %. Defaults to the
    ranking length.
    """
    if len(rankings) != len(references):
        raise ValueError("one reference per ranking required")
    if not rankings:
        raise ValueError("no queries")
    hits = 0
    for q, (ranking, ref) in enumerate(zip(rankings, references)):
        ranking = list(ranking)
        if ref not in ranking:
            raise ValueError(f"reference {ref!r} missing from query {q}'s candidates")
        pool = len(ranking) if pool_sizes is None else pool_sizes[q]
        cutoff = math.ceil(k_percent / 100.0 * pool - 1e-9)
        hits += ranking.index(ref) < cutoff
    return hits / len(rankings)


class StressMatch(NamedTuple):
    longvowel: float
    stress: float
    nonstop: float


def long_note_mask(durations) -> np.ndarray:
    """Notes strictly longer than the third quartile (linear interpolation)."""
    d = np.asarray(durations, dtype=float)
    return d > np.percentile(d, 75)


def stress_matching_rate(durations, sylphones, path) -> StressMatch | None:
    """Long-vowel, stressed and non-stopword shares among sylphones aligned to long notes.

    Returns None when no note is long (e.g. constant durations).
    """
    long = long_note_mask(durations)
    matched = sorted({j for i, j in path if long[i - 1]})
    if not matched:
        return None
    syls = [sylphones[j - 1] for j in matched]
    k = len(syls)
    return StressMatch(
        sum(s.vowel in LONG_VOWELS for s in syls) / k,
        sum(s.stress >= 1 for s in syls) / k,
        sum(not s.is_stopword for s in syls) / k,
    )


@dataclass(frozen=True)
class LineEndings:
    rhymes: tuple[tuple[str, tuple[str, ...]], ...]

    @classmethod
    def from_sylphones(cls, sylphones, line_ends) -> "LineEndings":
        return cls(tuple(sylphones[e].rhyme for e in line_ends))

    @property
    def vowels(self) -> list[str]:
        return [v for v, _ in self.rhymes]

    def positions(self) -> np.ndarray:
        counts = Counter(self.vowels)
        return np.array([counts[v] >= 2 for v in self.vowels], dtype=int)


def rhyme_density(endings: LineEndings) -> float:
    L = len(endings.rhymes)
    if L == 0:
        raise ValueError("no lines")
    return float(endings.positions().sum()) / L


def rhyme_strength(endings: LineEndings) -> float | None:
    """Half the sum of unique-vowel and unique-end-consonant ratios over rhyming lines.

    Lower means fewer distinct rhyme sounds. None when nothing rhymes.
    """
    groups: dict[str, set] = defaultdict(set)
    sizes: Counter = Counter()
    for (vowel, end), hit in zip(endings.rhymes, endings.positions()):
        if hit:
            groups[vowel].add(end)
            sizes[vowel] += 1
    K = sum(sizes.values())
    if K == 0:
        return None
    u = len(groups)
    w = sum(len(ends) for ends in groups.values())
    return 0.5 * (u / K + w / K)


def rhyme_distance(p, p_hat) -> float:
    """L1 disagreement of rhyme-position indicators over the size of their union."""
    p = np.asarray(p, dtype=int)
    p_hat = np.asarray(p_hat, dtype=int)
    if p.shape != p_hat.shape:
        raise ValueError("rhyme position vectors differ in length")
    union = int(np.sum(p | p_hat))
    if union == 0:
        return 0.0
    return float(np.abs(p_hat - p).sum()) / union


def extreme_matches(path) -> tuple[int, int]:
    """(max notes on one sylphone, max sylphones on one note) for a single path."""
    per_syl = Counter(j for _, j in path)
    per_note = Counter(i for i, _ in path)
    return max(per_syl.values()), max(per_note.values())


def fem(paths) -> tuple[float, float]:
    """Means over segments of :func:`extreme_matches`."""
    if not paths:
        raise ValueError("no paths")
    pairs = [extreme_matches(p) for p in paths]
    return (math.fsum(a for a, _ in pairs) / len(pairs),
            math.fsum(b for _, b in pairs) / len(pairs))


def mean_defined(values) -> tuple[float | None, int]:
    """Mean over non-None values, and how many were undefined."""
    vals = [v for v in values if v is not None]
    undefined = len(values) - len(vals)
    return (math.fsum(vals) / len(vals) if vals else None), undefined
