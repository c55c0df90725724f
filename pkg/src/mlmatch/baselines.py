"""Random and length-informed matchers, both aligned along the Bresenham diagonal."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .align import bresenham_path
from .retrieval import Candidate, RankedMatch


def _match(query_length: int, c: Candidate, method: str, cost: float) -> RankedMatch:
    return RankedMatch(c.candidate_id, cost, float("nan"), 0.0,
                       bresenham_path(query_length, c.length), c.provenance, method)


def random_baseline(query_length: int, candidates: Sequence[Candidate], rng: np.random.Generator) -> RankedMatch:
    """Pick one candidate uniformly at random."""
    if not candidates:
        raise ValueError("no candidates")
    c = candidates[int(rng.integers(len(candidates)))]
    return _match(query_length, c, "random", float("nan"))


def random_ranking(query_length: int, candidates: Sequence[Candidate], rng: np.random.Generator) -> list[RankedMatch]:
    """A uniform random permutation of all candidates."""
    if not candidates:
        raise ValueError("no candidates")
    order = rng.permutation(len(candidates))
    return [_match(query_length, candidates[k], "random", float(r)) for r, k in enumerate(order)]


def length_informed_rank(query_length: int, candidates: Sequence[Candidate]) -> list[RankedMatch]:
    """Candidates by ascending length gap to the query, ties by id."""
    if not candidates:
        raise ValueError("no candidates")
    ordered = sorted(candidates, key=lambda c: (abs(query_length - c.length), c.candidate_id))
    return [_match(query_length, c, "length_informed", float(abs(query_length - c.length))) for c in ordered]
