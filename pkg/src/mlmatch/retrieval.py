"""Candidate indexing, length pre-filtering and alignment-cost ranking.

Ranking works in either direction. For melody-to-lyrics the index holds
lyrics embeddings; for lyrics-to-melody it holds melody embeddings. Cost
matrices and paths are always oriented (note, sylphone).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import torch

from .align import Path, cost_matrix, dtw_batch, path_to_json, sdtw_batch
from .checkpoint import Checkpoint
from .melody import featurize_melody
from .phonetics import OutOfVocabularyError, Phonetics, Sylphone, encode_sequence
from .training import regularized_cost

logger = logging.getLogger(__name__)

DIRECTIONS = {"melody2lyrics": ("melody", "lyrics"), "lyrics2melody": ("lyrics", "melody")}


@dataclass
class Candidate:
    """One side of a segment, ready for encoding.

    ``items`` holds the sylphones (lyrics) or notes (melody) the features
    were built from; metrics and rendering read them.
    """

    candidate_id: str
    features: np.ndarray
    line_ends: list[int]
    items: list = field(default_factory=list)
    provenance: str = "original"

    @property
    def length(self) -> int:
        return len(self.features)


def lyrics_candidate(segment, provenance: str = "original", sylphones=None, suffix: str = "") -> Candidate:
    syls = list(segment.sylphones if sylphones is None else sylphones)
    return Candidate(segment.segment_id + suffix, encode_sequence(syls),
                     list(segment.lyrics_line_ends), syls, provenance)


def melody_candidate(segment, stats) -> Candidate:
    return Candidate(segment.segment_id, featurize_melody(segment.notes, stats),
                     list(segment.melody_line_ends), list(segment.notes))


def lyrics_candidates_from_text(texts: dict[str, Sequence[str]], phonetics: Phonetics) -> list[Candidate]:
    """Candidates from raw lyrics (id -> lines); entries with unknown words are skipped."""
    out = []
    for cid, lines in texts.items():
        syls, ends = [], []
        try:
            for line in lines:
                line_syls = phonetics.text_to_sylphones(line)
                if not line_syls:
                    raise OutOfVocabularyError([line])
                syls.extend(line_syls)
                ends.append(len(syls) - 1)
        except OutOfVocabularyError as exc:
            logger.warning("candidate %s excluded, out of vocabulary: %s", cid, exc)
            continue
        out.append(Candidate(cid, encode_sequence(syls), ends, syls))
    return out


@dataclass
class IndexEntry:
    candidate: Candidate
    embedding: np.ndarray


@dataclass
class CandidateIndex:
    side: str
    entries: dict[str, IndexEntry]

    def __len__(self):
        return len(self.entries)

    def ids(self) -> list[str]:
        return list(self.entries)


def embed(checkpoint: Checkpoint, features, side: str) -> np.ndarray:
    with torch.no_grad():
        return checkpoint.model.encode(features, side).numpy()


def build_index(checkpoint: Checkpoint, candidates: Sequence[Candidate], side: str = "lyrics") -> CandidateIndex:
    """Embed every candidate once; each is encoded alone so results never depend on batch company."""
    entries: dict[str, IndexEntry] = {}
    for c in candidates:
        if c.candidate_id in entries:
            raise ValueError(f"duplicate candidate id {c.candidate_id!r}")
        if c.length == 0:
            logger.warning("candidate %s is empty, excluded", c.candidate_id)
            continue
        entries[c.candidate_id] = IndexEntry(c, embed(checkpoint, c.features, side))
    return CandidateIndex(side, entries)


def prefilter(query_length: int, index: CandidateIndex, keep_fraction: float = 0.5) -> list[str]:
    """The ``ceil(keep_fraction * N)`` candidates closest in length to the query.

    Ties go to the lower candidate id. Returned in (length gap, id) order.
    """
    if not 0.0 < keep_fraction <= 1.0:
        raise ValueError("keep_fraction must be in (0, 1]")
    ranked = sorted(index.entries, key=lambda cid: (abs(query_length - index.entries[cid].candidate.length), cid))
    return ranked[:math.ceil(keep_fraction * len(ranked))]


@dataclass
class RankedMatch:
    candidate_id: str
    regularized_cost: float
    raw_sdtw: float
    length_penalty: float
    path: Path
    provenance: str = "original"
    method: str = "mlm"

    def to_json(self, rank: int) -> dict:
        return {
            "rank": rank,
            "candidate_id": self.candidate_id,
            "cost": self.regularized_cost,
            "raw_sdtw": self.raw_sdtw,
            "length_penalty": self.length_penalty,
            "path": path_to_json(self.path)["pairs"],
            "provenance": self.provenance,
            "method": self.method,
        }


def rank(query_features, index: CandidateIndex, checkpoint: Checkpoint, alpha: float | None = None,
         keep_fraction: float = 0.5, direction: str = "melody2lyrics",
         gamma: float | None = None) -> list[RankedMatch]:
    """Rank pre-filtered candidates by length-regularized soft-DTW cost.

    The regularization statistics are taken over the evaluated subset. Paths
    come from classical DTW on the same embeddings.
    """
    query_side, cand_side = DIRECTIONS[direction]
    if index.side != cand_side:
        raise ValueError(f"{direction} needs a {cand_side} index, got {index.side}")
    alpha = checkpoint.alpha if alpha is None else alpha
    gamma = checkpoint.gamma if gamma is None else gamma
    Q = embed(checkpoint, query_features, query_side)
    ids = prefilter(len(Q), index, keep_fraction)
    if not ids:
        return []
    if query_side == "melody":
        costs = [cost_matrix(Q, index.entries[c].embedding) for c in ids]
    else:
        costs = [cost_matrix(index.entries[c].embedding, Q) for c in ids]
    raw, _ = sdtw_batch(costs, gamma, gradients=False)
    raw = np.array(raw)
    diffs = np.array([abs(len(Q) - index.entries[c].candidate.length) for c in ids], dtype=float)
    with torch.no_grad():
        reg = regularized_cost(raw, diffs, alpha, checkpoint.epsilon).numpy()
    penalty = reg - (1.0 - alpha) * raw
    paths = [p for _, p in dtw_batch(costs)]
    matches = [
        RankedMatch(c, float(reg[k]), float(raw[k]), float(penalty[k]), paths[k],
                    index.entries[c].candidate.provenance)
        for k, c in enumerate(ids)
    ]
    matches.sort(key=lambda r: (r.regularized_cost, r.candidate_id))
    return matches


def full_ranking(matches: Sequence[RankedMatch], query_length: int, index: CandidateIndex) -> list[str]:
    """Ranked ids followed by the pre-filtered-out candidates in length-gap order."""
    seen = [m.candidate_id for m in matches]
    chosen = set(seen)
    rest = sorted((c for c in index.entries if c not in chosen),
                  key=lambda c: (abs(query_length - index.entries[c].candidate.length), c))
    return seen + rest


def sylphone_pool(segments) -> list[Sylphone]:
    """Every sylphone occurrence in a dataset (duplicates kept, so sampling is frequency-weighted)."""
    return [s for seg in segments for s in seg.sylphones]


def make_plain_variant(sylphones: Sequence[Sylphone], pool: Sequence[Sylphone], rng: np.random.Generator) -> list[Sylphone]:
    """Same-length distractor with sylphones drawn independently from ``pool``."""
    if not len(pool):
        raise ValueError("sylphone pool is empty")
    picks = rng.integers(len(pool), size=len(sylphones))
    return [pool[k] for k in picks]


def plain_candidates(segments, pool, rng: np.random.Generator) -> list[Candidate]:
    return [
        lyrics_candidate(s, "plain", make_plain_variant(s.sylphones, pool, rng), "#plain")
        for s in segments
    ]
