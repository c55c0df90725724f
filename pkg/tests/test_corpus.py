import json

import numpy as np
import pytest

from mlmatch.corpus import (
    Line, NoteEvent, Segment, SongRecord, filter_line_lengths, filter_rare_vocabulary, load_corpus,
    segment_song, split_dev, write_corpus,
)
from mlmatch.dataset import Dataset, read_archive, write_archive
from mlmatch.melody import fit_quantizers
from mlmatch.phonetics import Sylphone
from mlmatch.synthetic import make_corpus


def _song(song_id, texts, notes_per_line=3):
    lines, t = [], 0.0
    for text in texts:
        notes = []
        for _ in range(notes_per_line):
            notes.append(NoteEvent(60, t, 0.5))
            t += 0.5
        lines.append(Line(tuple(notes), text))
    return SongRecord(song_id, "en", tuple(lines))


def _record(lines):
    return {"song_id": "s", "language": "en", "lines": lines}


GOOD_LINE = {"text": "the snow", "notes": [{"pitch": 60, "onset": 0.0, "duration": 0.5}]}


def test_load_skips_malformed(tmp_path, caplog):
    bad_zero_notes = _record([{"text": "the snow", "notes": []}])
    bad_pitch = _record([{"text": "x", "notes": [{"pitch": 200, "onset": 0.0, "duration": 0.5}]}])
    bad_dur = _record([{"text": "x", "notes": [{"pitch": 60, "onset": 0.0, "duration": 0.0}]}])
    p = tmp_path / "c.jsonl"
    p.write_text("\n".join(json.dumps(r) for r in [_record([GOOD_LINE]), bad_zero_notes, bad_pitch, bad_dur])
                 + "\n{not json\n")
    songs = load_corpus(p)
    assert len(songs) == 1
    assert songs[0].lines[0].notes[0] == NoteEvent(60, 0.0, 0.5)
    assert sum("skipping" in r.message for r in caplog.records) == 4


def test_load_directory_and_missing(tmp_path):
    write_corpus(make_corpus(4, seed=1), tmp_path / "a.jsonl")
    write_corpus(make_corpus(4, seed=2, prefix="b"), tmp_path / "b.jsonl")
    assert len(load_corpus(tmp_path)) == 2
    with pytest.raises(FileNotFoundError):
        load_corpus(tmp_path / "nope")


def test_write_load_roundtrip(tmp_path):
    songs = make_corpus(8, seed=3)
    write_corpus(songs, tmp_path / "c.jsonl")
    assert load_corpus(tmp_path / "c.jsonl") == songs


def test_nine_lines_make_two_segments(phonetics):
    song = _song("s", ["the snow"] * 9)
    segs = segment_song(song, 4, phonetics)
    assert [s.segment_id for s in segs] == ["s:0", "s:1"]
    assert segs[0].line_texts == ["the snow"] * 4
    assert segs[0].melody_line_ends == [2, 5, 8, 11]
    assert segs[0].lyrics_line_ends == [1, 3, 5, 7]
    assert segs[1].notes[0].onset == pytest.approx(6.0)


def test_oov_window_dropped(phonetics):
    song = _song("s", ["the snow"] * 4 + ["zzyzx"] + ["the snow"] * 3)
    assert [s.segment_id for s in segment_song(song, 4, phonetics)] == ["s:0"]


def _seg(song_id, k, notes, syls, mel_ends=None, lyr_ends=None):
    return Segment(song_id, f"{song_id}:{k}", notes, syls,
                   mel_ends or [len(notes) - 1], lyr_ends or [len(syls) - 1], [])


def test_rare_filter_single_pass():
    common = Sylphone((), "OW", 1, ())
    rare = Sylphone((), "IY", 1, ())
    mid = Sylphone((), "AY", 1, ())
    notes = [NoteEvent(60, 0.0, 0.5), NoteEvent(60, 0.5, 0.5)]
    # "mid" occurs 2x: once next to the rare sylphone, once alone.
    segs = [_seg("a", 0, notes, [common, rare]), _seg("b", 0, notes, [common, mid]),
            _seg("c", 0, notes, [common, mid])] + [_seg(f"d{i}", 0, notes, [common]) for i in range(3)]
    kept, report = filter_rare_vocabulary(segs, min_count=2)
    # Only the rare segment is removed. "mid" still counts twice even though a
    # second pass would not change anything, and the single pass does not recount.
    assert [s.song_id for s in kept] == ["b", "c", "d0", "d1", "d2"]
    assert report["rare_sylphone_types"] == 1 and report["input"] == 6 and report["kept"] == 5


def test_rare_filter_no_recount():
    x, y, z = (Sylphone((), v, 1, ()) for v in ("OW", "IY", "AY"))
    notes = [NoteEvent(60, 0.0, 0.5)]
    # y appears twice: once alongside the rare z. After removing that segment y
    # would be rare, but a single pass keeps the other y segment.
    segs = [_seg("a", 0, notes, [y, z]), _seg("b", 0, notes, [y, x])] + [_seg(f"c{i}", 0, notes, [x]) for i in range(2)]
    kept, _ = filter_rare_vocabulary(segs, min_count=2)
    assert [s.song_id for s in kept] == ["b", "c0", "c1"]


def test_rare_filter_empty():
    assert filter_rare_vocabulary([], 10)[0] == []


def test_line_length_filter():
    syl = Sylphone((), "OW", 1, ())
    note = NoteEvent(60, 0.0, 0.5)
    ok = _seg("a", 0, [note] * 6, [syl] * 4, [2, 5], [1, 3])
    short_melody = _seg("b", 0, [note] * 5, [syl] * 4, [1, 4], [1, 3])
    long_lyrics = _seg("c", 0, [note] * 6, [syl] * 12, [2, 5], [10, 11])
    assert filter_line_lengths([ok, short_melody, long_lyrics]) == [ok]


def test_split_is_song_level():
    syl = Sylphone((), "OW", 1, ())
    segs = [_seg(f"s{i}", k, [NoteEvent(60, 0.0, 0.5)], [syl]) for i in range(20) for k in range(3)]
    train, val = split_dev(segs, 0.8, seed=0)
    tr, va = {s.song_id for s in train}, {s.song_id for s in val}
    assert not tr & va
    assert len(tr) == 16 and len(va) == 4
    assert len(train) + len(val) == len(segs)
    assert split_dev(segs, 0.8, seed=0) == (train, val)


def test_split_varies_with_seed():
    syl = Sylphone((), "OW", 1, ())
    segs = [_seg(f"s{i}", 0, [NoteEvent(60, 0.0, 0.5)], [syl]) for i in range(10)]
    vals = {tuple(sorted(s.song_id for s in split_dev(segs, 0.8, seed)[1])) for seed in range(100)}
    assert len(vals) > 20


def test_split_needs_two_songs():
    syl = Sylphone((), "OW", 1, ())
    with pytest.raises(ValueError):
        split_dev([_seg("a", 0, [NoteEvent(60, 0.0, 0.5)], [syl])])


def test_synthetic_corpus_survives_filters(phonetics):
    from mlmatch.phonetics import Phonetics
    from mlmatch.synthetic import synthetic_dictionary
    ph = Phonetics(synthetic_dictionary())
    songs = make_corpus(100, seed=0)
    segs = [s for song in songs for s in segment_song(song, 4, ph)]
    assert len(segs) == 100
    assert filter_line_lengths(segs) == segs
    kept, _ = filter_rare_vocabulary(segs, 10)
    assert len(kept) >= 80


def test_archive_roundtrip(tmp_path):
    from mlmatch.phonetics import Phonetics
    from mlmatch.synthetic import synthetic_dictionary
    ph = Phonetics(synthetic_dictionary())
    segs = [s for song in make_corpus(8, seed=0) for s in segment_song(song, 4, ph)]
    stats = fit_quantizers(s.notes for s in segs)
    ds = Dataset({"train": segs[:6], "validation": segs[6:]}, stats, {"k": 1})
    write_archive(ds, tmp_path / "a.json")
    back = read_archive(tmp_path / "a.json")
    assert back.quantizer == stats and back.meta == {"k": 1}
    assert back["train"] == segs[:6] and back["test"] == []
    assert back.find(segs[7].segment_id) == segs[7]
    first = (tmp_path / "a.json").read_bytes()
    write_archive(back, tmp_path / "b.json")
    assert (tmp_path / "b.json").read_bytes() == first
