import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mlmatch.corpus import NoteEvent
from mlmatch.melody import (
    DURATION_OFFSET, IOI_OFFSET, MELODY_DIM, SIGN_OFFSET, QuantizerStats, featurize_melody, fit_quantizers,
    inter_onset_intervals, note_tokens, quantize,
)


def _notes(pitches, durs=None, onsets=None):
    durs = durs or [0.5] * len(pitches)
    if onsets is None:
        onsets = np.concatenate([[0.0], np.cumsum(durs[:-1])])
    return [NoteEvent(p, float(o), float(d)) for p, o, d in zip(pitches, onsets, durs)]


def test_dimension_layout():
    assert (SIGN_OFFSET, DURATION_OFFSET, IOI_OFFSET, MELODY_DIM) == (128, 129, 153, 177)


def test_pitch_change_up_and_down():
    stats = fit_quantizers([_notes([60, 67])])
    assert note_tokens(_notes([60, 67]), stats)[1, :2].tolist() == [7, 1]
    assert note_tokens(_notes([60, 55]), stats)[1, :2].tolist() == [5, 0]


def test_first_note_is_reference():
    stats = fit_quantizers([_notes([60, 64, 59])])
    tok = note_tokens(_notes([60, 64, 59]), stats)
    assert tok[0, :2].tolist() == [0, 1]


def test_first_ioi_zero():
    assert inter_onset_intervals(_notes([60, 62, 64], [1.0, 0.5, 0.5])).tolist() == [0.0, 1.0, 0.5]


def test_constant_durations_widen():
    notes = _notes([60, 62, 64], [1.0, 1.0, 1.0])
    stats = fit_quantizers([notes])
    assert stats.log_duration_max - stats.log_duration_min == pytest.approx(1.0)
    tok = note_tokens(notes, stats)
    assert np.all((tok[:, 2] >= 0) & (tok[:, 2] < 24))
    assert np.all(tok[:, 2] == 12)


def test_zero_duration_clamped():
    stats = fit_quantizers([_notes([60, 61], [0.0, 1.0])])
    assert stats.log_duration_min == pytest.approx(math.log(1e-3))


def test_quantize_clips_out_of_range():
    assert quantize([-10.0, 0.0, 0.999, 1.0, 10.0], 0.0, 1.0, 24).tolist() == [0, 0, 23, 23, 23]


def test_fit_empty_raises():
    with pytest.raises(ValueError):
        fit_quantizers([])


def test_stats_roundtrip():
    s = QuantizerStats(-1.0, 2.0, -3.0, 4.0)
    assert QuantizerStats.from_dict(s.to_dict()) == s


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 127), st.floats(0.0, 5.0)), min_size=1, max_size=30))
def test_features_are_valid_multi_hot(pairs):
    pitches = [p for p, _ in pairs]
    durs = [d for _, d in pairs]
    notes = _notes(pitches, durs)
    f = featurize_melody(notes, fit_quantizers([notes]))
    assert f.shape == (len(notes), 177)
    assert set(np.unique(f)) <= {0.0, 1.0}
    assert np.all(f[:, :128].sum(1) == 1)
    assert np.all(f[:, 129:153].sum(1) == 1)
    assert np.all(f[:, 153:177].sum(1) == 1)
    assert np.all(f[:, 128] == (np.array(pitches) >= pitches[0]))
