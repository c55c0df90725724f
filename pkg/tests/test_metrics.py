import numpy as np
import pytest

from mlmatch.align import bresenham_path
from mlmatch.metrics import (
    LineEndings, StressMatch, extreme_matches, fem, hit_at_k, long_note_mask, mean_defined, rhyme_density,
    rhyme_distance, rhyme_strength, stress_matching_rate,
)
from mlmatch.phonetics import Sylphone

SNOW = Sylphone(("S", "N"), "OW", 1, (), False, "snow")
THE = Sylphone(("DH",), "AH", 0, (), True, "the")


def _endings(*rhymes):
    return LineEndings(tuple((v, tuple(e)) for v, e in rhymes))


def test_hit_at_k_cutoffs():
    rankings = [["a", "b", "c", "d"], ["b", "a", "c", "d"]]
    assert hit_at_k(rankings, ["a", "a"], 25) == 0.5
    assert hit_at_k(rankings, ["a", "a"], 50) == 1.0
    # 1% of 4 rounds up to the top 1
    assert hit_at_k(rankings, ["a", "a"], 1) == 0.5


def test_hit_at_k_pool_sizes():
    ranking = ["x", "ref"] + [f"c{k}" for k in range(198)]
    # cutoff from 100 originals: 3% -> top 3 includes rank 2
    assert hit_at_k([ranking], ["ref"], 1, [100]) == 0.0
    assert hit_at_k([ranking], ["ref"], 3, [100]) == 1.0


def test_hit_at_k_default_pool_is_ranking_length():
    ranking = ["x", "ref"] + [f"c{k}" for k in range(198)]
    assert hit_at_k([ranking], ["ref"], 1) == 1.0


def test_hit_at_k_errors():
    with pytest.raises(ValueError):
        hit_at_k([["a"]], ["b"], 5)
    with pytest.raises(ValueError):
        hit_at_k([], [], 5)


def test_long_note_quartile():
    durs = [1, 1, 1, 4]
    assert np.percentile(durs, 75) == 1.75
    assert long_note_mask(durs).tolist() == [False, False, False, True]


def test_smr_snow_and_the():
    durs = [1, 1, 1, 4]
    path = [(1, 1), (2, 1), (3, 1), (4, 2)]
    assert stress_matching_rate(durs, [THE, SNOW], path) == StressMatch(1.0, 1.0, 1.0)
    assert stress_matching_rate(durs, [SNOW, THE], path) == StressMatch(0.0, 0.0, 0.0)


def test_smr_undefined_for_equal_durations():
    assert stress_matching_rate([1, 1, 1], [SNOW], [(1, 1), (2, 1), (3, 1)]) is None


def test_smr_counts_unique_sylphones():
    durs = [1, 1, 1, 4, 4, 4, 4, 4]  # Q3 = 4, nothing above it
    assert stress_matching_rate(durs, [SNOW], [(k, 1) for k in range(1, 9)]) is None
    durs = [1, 1, 1, 1, 1, 1, 5, 5]
    path = [(1, 1), (2, 1), (3, 1), (4, 1), (5, 1), (6, 1), (7, 2), (8, 2), (8, 3)]
    out = stress_matching_rate(durs, [THE, SNOW, THE], path)
    assert out == StressMatch(0.5, 0.5, 0.5)


def test_rhyme_density():
    assert rhyme_density(_endings(("OW", ()), ("IY", ()), ("OW", ()), ("IY", ()))) == 1.0
    assert rhyme_density(_endings(("OW", ()), ("IY", ()), ("AY", ()), ("IY", ()))) == 0.5
    assert rhyme_density(_endings(("OW", ()), ("IY", ()))) == 0.0


def test_rhyme_strength_cases():
    assert rhyme_strength(_endings(*[("OW", ())] * 4)) == 0.25
    assert rhyme_strength(_endings(("OW", ()), ("OW", ()), ("IY", ("T",)), ("IY", ("T",)))) == 0.5
    assert rhyme_strength(_endings(("AY", ("T",)), ("AY", ("D",)), ("AY", ("N",)), ("AY", ()))) == 0.625
    assert rhyme_strength(_endings(("OW", ()), ("IY", ()))) is None


def test_rhyme_distance():
    assert rhyme_distance([1, 0, 1, 0], [1, 1, 0, 0]) == pytest.approx(2 / 3)
    assert rhyme_distance([0, 0], [0, 0]) == 0.0
    assert rhyme_distance([1, 1], [1, 1]) == 0.0
    with pytest.raises(ValueError):
        rhyme_distance([1], [1, 0])


def test_line_endings_from_sylphones():
    syls = [THE, SNOW, THE, Sylphone(("G",), "OW", 1, ())]
    end = LineEndings.from_sylphones(syls, [1, 3])
    assert end.vowels == ["OW", "OW"] and end.positions().tolist() == [1, 1]


def test_extreme_matches():
    assert extreme_matches([(1, 1), (1, 2), (2, 3), (3, 3)]) == (2, 2)
    assert fem([[(1, 1), (2, 2)], [(1, 1), (1, 2), (2, 3), (3, 3)]]) == (1.5, 1.5)
    with pytest.raises(ValueError):
        fem([])


def test_fem_equal_lengths_diagonal():
    assert fem([bresenham_path(n, n) for n in range(1, 30)]) == (1.0, 1.0)


def test_mean_defined():
    assert mean_defined([1.0, None, 3.0]) == (2.0, 1)
    assert mean_defined([None]) == (None, 1)


def test_random_ranking_hit_rate_is_unbiased():
    from mlmatch.corpus import segment_song
    from mlmatch.evaluation import evaluate
    from mlmatch.phonetics import Phonetics
    from mlmatch.synthetic import make_corpus, synthetic_dictionary

    ph = Phonetics(synthetic_dictionary())
    test = [s for song in make_corpus(100, seed=7) for s in segment_song(song, 4, ph)]
    rates = {1: [], 3: [], 5: []}
    for seed in range(40):
        report = evaluate(test, "random", with_plain=True, seed=seed, top=1)
        for k in rates:
            rates[k].append(report[f"hit@{k}%"])
    for k, v in rates.items():
        p = k / 200
        se = np.sqrt(p * (1 - p) / 4000)
        assert abs(np.mean(v) - p) < 4 * se
