"""Fixed-width text rendering of a note/sylphone alignment.

Three tiers, one column per path step: notes on top, the words they carry in
the middle and the sylphones underneath. A held note or sylphone is shown
as ``~``; ``|`` after a column marks a lyrics line end.
"""

from __future__ import annotations

NOTE_NAMES = ("C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B")


def note_name(pitch: int) -> str:
    return f"{NOTE_NAMES[pitch % 12]}{pitch // 12 - 1}"


def sylphone_label(s) -> str:
    parts = ["".join(s.front).lower(), f"{s.vowel}{s.stress}", "".join(s.end).lower()]
    return ".".join(p for p in parts if p)


def alignment_grid(notes, sylphones, path, lyrics_line_ends=(), width: int = 100) -> str:
    """Render ``path`` over ``notes`` (NoteEvent) and ``sylphones``, wrapped at ``width``."""
    ends = set(lyrics_line_ends)
    cols = []
    prev_i = prev_j = None
    for i, j in path:
        note = note_name(notes[i - 1].pitch) if i != prev_i else "~"
        s = sylphones[j - 1]
        if j != prev_j:
            word = s.word if s.syllable_index == 0 else "-"
            syl = sylphone_label(s)
        else:
            word, syl = "", "~"
        if (j - 1) in ends and j != prev_j:
            word += "|"
        w = max(len(note), len(word), len(syl)) + 1
        cols.append((note.ljust(w), word.ljust(w), syl.ljust(w)))
        prev_i, prev_j = i, j

    blocks, cur, cur_w = [], [], 0
    for col in cols:
        if cur and cur_w + len(col[0]) > width:
            blocks.append(cur)
            cur, cur_w = [], 0
        cur.append(col)
        cur_w += len(col[0])
    if cur:
        blocks.append(cur)
    out = []
    for block in blocks:
        for tier, label in zip(range(3), ("notes ", "words ", "sylph ")):
            out.append(label + "".join(c[tier] for c in block).rstrip())
        out.append("")
    return "\n".join(out).rstrip() + "\n"
