"""Run a matching method over a test set and collect the metric report."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from . import metrics
from .baselines import length_informed_rank, random_ranking
from .checkpoint import Checkpoint
from .melody import featurize_melody
from .retrieval import (
    Candidate, build_index, full_ranking, lyrics_candidate, plain_candidates, rank, sylphone_pool,
)

METHODS = ("mlm", "random", "length")
K_PERCENTS = (1, 3, 5)


def candidate_pool(segments, with_plain: bool, rng: np.random.Generator) -> list[Candidate]:
    pool = [lyrics_candidate(s) for s in segments]
    if with_plain:
        pool += plain_candidates(segments, sylphone_pool(segments), rng)
    return pool


def _ranked(method, query, candidates, index, checkpoint, rng, alpha, keep_fraction):
    if method == "random":
        matches = random_ranking(query.n, candidates, rng)
        return matches, [m.candidate_id for m in matches]
    if method == "length":
        matches = length_informed_rank(query.n, candidates)
        return matches, [m.candidate_id for m in matches]
    feats = featurize_melody(query.notes, checkpoint.quantizer)
    matches = rank(feats, index, checkpoint, alpha=alpha, keep_fraction=keep_fraction)
    return matches, full_ranking(matches, query.n, index)


def _mean(values):
    vals = [v for v in values if v is not None]
    return math.fsum(vals) / len(vals) if vals else None


def evaluate(test_segments: Sequence, method: str = "mlm", checkpoint: Checkpoint | None = None,
             with_plain: bool = True, seed: int = 0, alpha: float | None = None,
             keep_fraction: float = 0.5, top: int = 5) -> dict:
    """Every test melody queries the test lyrics (plus plain variants).

    Alignment metrics are averaged over each query's ``top`` matches, then
    over queries; undefined values are excluded and counted.
    """
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    if method == "mlm" and checkpoint is None:
        raise ValueError("the mlm method needs a checkpoint")
    if not test_segments:
        raise ValueError("empty test set")
    rng = np.random.default_rng(seed)
    candidates = candidate_pool(test_segments, with_plain, rng)
    by_id = {c.candidate_id: c for c in candidates}
    index = build_index(checkpoint, candidates) if method == "mlm" else None

    rankings, refs = [], []
    per = {k: [] for k in ("smr_longvowel", "smr_stress", "smr_nonstop", "r_den", "r_str",
                           "r_dis", "fem_notes", "fem_sylphones")}
    ref_den, ref_str = [], []
    for q in test_segments:
        matches, ranking = _ranked(method, q, candidates, index, checkpoint, rng, alpha, keep_fraction)
        rankings.append(ranking)
        refs.append(q.segment_id)
        ref_end = metrics.LineEndings.from_sylphones(q.sylphones, q.lyrics_line_ends)
        ref_den.append(metrics.rhyme_density(ref_end))
        ref_str.append(metrics.rhyme_strength(ref_end))
        durs = [n.duration for n in q.notes]
        rows = {k: [] for k in per}
        for mt in matches[:top]:
            c = by_id[mt.candidate_id]
            smr = metrics.stress_matching_rate(durs, c.items, mt.path)
            if smr is not None:
                rows["smr_longvowel"].append(smr.longvowel)
                rows["smr_stress"].append(smr.stress)
                rows["smr_nonstop"].append(smr.nonstop)
            end = metrics.LineEndings.from_sylphones(c.items, c.line_ends)
            rows["r_den"].append(metrics.rhyme_density(end))
            rows["r_str"].append(metrics.rhyme_strength(end))
            if len(end.rhymes) == len(ref_end.rhymes):
                rows["r_dis"].append(metrics.rhyme_distance(ref_end.positions(), end.positions()))
            a, b = metrics.extreme_matches(mt.path)
            rows["fem_notes"].append(a)
            rows["fem_sylphones"].append(b)
        for k in per:
            per[k].append(_mean(rows[k]))

    originals = len(test_segments)
    report = {
        "method": method,
        "with_plain": with_plain,
        "seed": seed,
        "queries": len(test_segments),
        "pool_size": originals,
        "candidates": len(candidates),
        "top": top,
    }
    for k in K_PERCENTS:
        report[f"hit@{k}%"] = metrics.hit_at_k(rankings, refs, k, [originals] * len(rankings))
    undefined = {}
    for k, vals in per.items():
        report[k], undefined[k] = metrics.mean_defined(vals)
    report["undefined"] = undefined
    report["reference"] = {"r_den": metrics.mean_defined(ref_den)[0],
                           "r_str": metrics.mean_defined(ref_str)[0]}
    report["per_segment"] = {"segment_id": refs, **per, "ref_r_den": ref_den, "ref_r_str": ref_str}
    return report
