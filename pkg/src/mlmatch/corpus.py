"""Song corpus parsing, line-based segmentation and dataset filters.

Corpus files are JSONL, one song per line::

    {"song_id": "...", "language": "en",
     "lines": [{"notes": [{"pitch": 60, "onset": 0.0, "duration": 0.5}, ...],
                "text": "we're driving slow"}, ...]}
"""

from __future__ import annotations

import json
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .melody import fit_quantizers, note_tokens
from .phonetics import OutOfVocabularyError, Phonetics, Sylphone

logger = logging.getLogger(__name__)

MELODY_LINE_RANGE = (3, 11)
LYRICS_LINE_RANGE = (2, 10)


@dataclass(frozen=True)
class NoteEvent:
    pitch: int
    onset: float
    duration: float

    def to_dict(self) -> dict:
        return {"pitch": self.pitch, "onset": self.onset, "duration": self.duration}


@dataclass(frozen=True)
class Line:
    notes: tuple[NoteEvent, ...]
    text: str


@dataclass(frozen=True)
class SongRecord:
    song_id: str
    language: str
    lines: tuple[Line, ...]

    def to_dict(self) -> dict:
        return {
            "song_id": self.song_id,
            "language": self.language,
            "lines": [{"notes": [n.to_dict() for n in ln.notes], "text": ln.text}
                      for ln in self.lines],
        }


@dataclass
class Segment:
    song_id: str
    segment_id: str
    notes: list[NoteEvent]
    sylphones: list[Sylphone]
    melody_line_ends: list[int]
    lyrics_line_ends: list[int]
    line_texts: list[str] = field(default_factory=list)

    @property
    def n(self) -> int:
        return len(self.notes)

    @property
    def m(self) -> int:
        return len(self.sylphones)

    def melody_line_lengths(self) -> list[int]:
        return _lengths(self.melody_line_ends)

    def lyrics_line_lengths(self) -> list[int]:
        return _lengths(self.lyrics_line_ends)


def _lengths(ends: Sequence[int]) -> list[int]:
    out, prev = [], -1
    for e in ends:
        out.append(e - prev)
        prev = e
    return out


class CorpusError(ValueError):
    pass


def _parse_song(obj) -> SongRecord:
    if not isinstance(obj, dict):
        raise CorpusError("record is not an object")
    song_id, language, lines = obj.get("song_id"), obj.get("language"), obj.get("lines")
    if not isinstance(song_id, str) or not song_id:
        raise CorpusError("missing song_id")
    if not isinstance(language, str):
        raise CorpusError("missing language")
    if not isinstance(lines, list) or not lines:
        raise CorpusError("song has no lines")
    parsed = []
    last_onset = -math.inf
    for k, line in enumerate(lines):
        if not isinstance(line, dict):
            raise CorpusError(f"line {k} is not an object")
        text, notes = line.get("text"), line.get("notes")
        if not isinstance(text, str) or not text.strip():
            raise CorpusError(f"line {k} has empty text")
        if not isinstance(notes, list) or not notes:
            raise CorpusError(f"line {k} has no notes")
        events = []
        for note in notes:
            try:
                pitch, onset, dur = note["pitch"], float(note["onset"]), float(note["duration"])
            except (KeyError, TypeError, ValueError) as exc:
                raise CorpusError(f"line {k}: bad note {note!r}") from exc
            if isinstance(pitch, bool) or not isinstance(pitch, int) or not 0 <= pitch <= 127:
                raise CorpusError(f"line {k}: pitch {pitch!r} outside [0, 127]")
            if not (onset >= 0 and math.isfinite(onset)):
                raise CorpusError(f"line {k}: negative onset")
            if not (dur > 0 and math.isfinite(dur)):
                raise CorpusError(f"line {k}: non-positive duration")
            if onset < last_onset:
                raise CorpusError(f"line {k}: onsets decrease")
            last_onset = onset
            events.append(NoteEvent(pitch, onset, dur))
        parsed.append(Line(tuple(events), text))
    return SongRecord(song_id, language, tuple(parsed))


def _corpus_files(path: Path) -> list[Path]:
    if path.is_dir():
        return sorted(p for p in path.iterdir() if p.suffix in (".jsonl", ".json"))
    return [path]


def load_corpus(path) -> list[SongRecord]:
    """Parse every song record under ``path`` (a JSONL file or a directory of them).

    Malformed records are logged and skipped; unreadable files raise.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    songs = []
    for fp in _corpus_files(path):
        with fp.open(encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, 1):
                if not raw.strip():
                    continue
                try:
                    songs.append(_parse_song(json.loads(raw)))
                except (json.JSONDecodeError, CorpusError) as exc:
                    logger.warning("%s:%d: skipping record: %s", fp.name, lineno, exc)
    return songs


def write_corpus(songs: Iterable[SongRecord], path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for song in songs:
            fh.write(json.dumps(song.to_dict(), sort_keys=True) + "\n")


def segment_song(song: SongRecord, lines_per_segment: int, phonetics: Phonetics) -> list[Segment]:
    """Cut a song into non-overlapping windows of ``lines_per_segment`` lines.

    The trailing partial window is dropped, as is any window with a word
    the dictionary cannot pronounce.
    """
    if lines_per_segment < 1:
        raise ValueError("lines_per_segment must be >= 1")
    out = []
    for k in range(len(song.lines) // lines_per_segment):
        window = song.lines[k * lines_per_segment:(k + 1) * lines_per_segment]
        notes: list[NoteEvent] = []
        syls: list[Sylphone] = []
        mel_ends, lyr_ends = [], []
        try:
            for line in window:
                line_syls = phonetics.text_to_sylphones(line.text)
                if not line_syls:
                    raise OutOfVocabularyError([line.text])
                notes.extend(line.notes)
                syls.extend(line_syls)
                mel_ends.append(len(notes) - 1)
                lyr_ends.append(len(syls) - 1)
        except OutOfVocabularyError as exc:
            logger.info("%s segment %d dropped, out of vocabulary: %s", song.song_id, k, exc)
            continue
        out.append(Segment(
            song_id=song.song_id,
            segment_id=f"{song.song_id}:{k}",
            notes=notes,
            sylphones=syls,
            melody_line_ends=mel_ends,
            lyrics_line_ends=lyr_ends,
            line_texts=[ln.text for ln in window],
        ))
    return out


def filter_rare_vocabulary(segments: Sequence[Segment], min_count: int = 10):
    """Drop segments containing a note or sylphone seen fewer than ``min_count`` times.

    Note identity is the quantized (pitch change, sign, duration bin, IOI bin)
    tuple under bounds fitted on ``segments`` themselves; sylphone identity
    is what the lyrics encoder sees (vowel, stress, end consonants, stopword).
    One pass only: counts are not recomputed after removal.

    Returns:
        (kept segments, report dict)
    """
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    if not segments:
        return [], {"min_count": min_count, "input": 0, "kept": 0,
                    "note_types": 0, "rare_note_types": 0,
                    "sylphone_types": 0, "rare_sylphone_types": 0}
    stats = fit_quantizers(s.notes for s in segments)
    seg_notes = [[tuple(int(v) for v in t) for t in note_tokens(s.notes, stats)] for s in segments]
    seg_syls = [[sy.key for sy in s.sylphones] for s in segments]
    note_counts = Counter(t for toks in seg_notes for t in toks)
    syl_counts = Counter(k for keys in seg_syls for k in keys)
    rare_notes = {t for t, c in note_counts.items() if c < min_count}
    rare_syls = {k for k, c in syl_counts.items() if c < min_count}
    kept = [
        s for s, toks, keys in zip(segments, seg_notes, seg_syls)
        if not rare_notes.intersection(toks) and not rare_syls.intersection(keys)
    ]
    report = {
        "min_count": min_count,
        "input": len(segments),
        "kept": len(kept),
        "note_types": len(note_counts),
        "rare_note_types": len(rare_notes),
        "sylphone_types": len(syl_counts),
        "rare_sylphone_types": len(rare_syls),
    }
    return kept, report


def filter_line_lengths(segments, melody_range=MELODY_LINE_RANGE, lyrics_range=LYRICS_LINE_RANGE):
    """Keep segments whose every line length lies in the inclusive ranges."""
    mlo, mhi = melody_range
    llo, lhi = lyrics_range
    return [
        s for s in segments
        if all(mlo <= k <= mhi for k in s.melody_line_lengths())
        and all(llo <= k <= lhi for k in s.lyrics_line_lengths())
    ]


def split_dev(segments: Sequence[Segment], ratio: float = 0.8, seed: int = 0):
    """Song-level train/validation split; no song lands on both sides."""
    songs = sorted({s.song_id for s in segments})
    if len(songs) < 2:
        raise ValueError("need at least two songs to split")
    order = np.random.default_rng(seed).permutation(len(songs))
    n_train = min(max(int(round(ratio * len(songs))), 1), len(songs) - 1)
    train_ids = {songs[i] for i in order[:n_train]}
    train = [s for s in segments if s.song_id in train_ids]
    val = [s for s in segments if s.song_id not in train_ids]
    return train, val
