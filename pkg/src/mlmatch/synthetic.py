"""Synthetic corpus whose lyrics are a function of the melody.

Every note carries one single-syllable word chosen by two melody properties:
whether the note sits at or above the segment's first pitch, and which of
four duration classes it has. A dual encoder can learn the mapping, so the
corpus serves as a learnability check for the whole pipeline.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .corpus import Line, NoteEvent, SongRecord

DURATIONS = (0.2, 0.4, 0.8, 1.6)

# (above first note, duration class) -> word
WORDS = {
    (1, 0): "the",
    (1, 1): "go",
    (1, 2): "see",
    (1, 3): "moon",
    (0, 0): "it",
    (0, 1): "tan",
    (0, 2): "bird",
    (0, 3): "fly",
}

PRONUNCIATIONS = {
    "the": "DH AH0",
    "go": "G OW1",
    "see": "S IY1",
    "moon": "M UW1 N",
    "it": "IH1 T",
    "tan": "T AE1 N",
    "bird": "B ER1 D",
    "fly": "F L AY1",
}


def synthetic_dictionary() -> dict[str, tuple[str, ...]]:
    return {w: tuple(p.split()) for w, p in PRONUNCIATIONS.items()}


def write_dictionary(path) -> None:
    lines = [f"{w.upper()}  {p}" for w, p in sorted(PRONUNCIATIONS.items())]
    Path(path).write_text(";;; synthetic pronouncing dictionary\n" + "\n".join(lines) + "\n")


def make_song(song_id: str, n_lines: int, lines_per_segment: int, rng: np.random.Generator,
              line_notes=(4, 7), pitch_spread: int = 3, line_gap: float = 0.0) -> SongRecord:
    """One song; pitch signs are taken against the first note of each segment window."""
    lines = []
    t = 0.0
    ref = 0
    for k in range(n_lines):
        count = int(rng.integers(line_notes[0], line_notes[1] + 1))
        notes, words = [], []
        for q in range(count):
            if k % lines_per_segment == 0 and q == 0:
                ref = int(rng.integers(55, 68))
                pitch = ref
            else:
                pitch = ref + int(rng.integers(-pitch_spread, pitch_spread + 1))
            dclass = int(rng.integers(len(DURATIONS)))
            dur = DURATIONS[dclass]
            notes.append(NoteEvent(pitch, round(t, 6), dur))
            words.append(WORDS[(int(pitch >= ref), dclass)])
            t += dur
        t += line_gap
        lines.append(Line(tuple(notes), " ".join(words)))
    return SongRecord(song_id, "en", tuple(lines))


def make_corpus(n_segments: int, lines_per_segment: int = 4, segments_per_song: int = 4,
                seed: int = 0, prefix: str = "song") -> list[SongRecord]:
    """Songs yielding exactly ``n_segments`` segments of ``lines_per_segment`` lines."""
    rng = np.random.default_rng(seed)
    songs = []
    remaining = n_segments
    k = 0
    while remaining > 0:
        segs = min(segments_per_song, remaining)
        songs.append(make_song(f"{prefix}{k:04d}", segs * lines_per_segment, lines_per_segment, rng))
        remaining -= segs
        k += 1
    return songs
