"""Featurized dataset archive (deterministic JSON)."""

from __future__ import annotations

import json
from pathlib import Path

from .corpus import NoteEvent, Segment
from .melody import QuantizerStats, note_tokens
from .phonetics import Sylphone

FORMAT = "mlmatch-dataset"
VERSION = 1
SPLITS = ("train", "validation", "test")


def segment_to_dict(seg: Segment, stats: QuantizerStats | None = None) -> dict:
    d = {
        "song_id": seg.song_id,
        "segment_id": seg.segment_id,
        "notes": [[n.pitch, n.onset, n.duration] for n in seg.notes],
        "sylphones": [s.to_dict() for s in seg.sylphones],
        "melody_line_ends": list(seg.melody_line_ends),
        "lyrics_line_ends": list(seg.lyrics_line_ends),
        "line_texts": list(seg.line_texts),
    }
    if stats is not None:
        d["note_tokens"] = note_tokens(seg.notes, stats).tolist()
    return d


def segment_from_dict(d: dict) -> Segment:
    return Segment(
        song_id=d["song_id"],
        segment_id=d["segment_id"],
        notes=[NoteEvent(int(p), float(o), float(t)) for p, o, t in d["notes"]],
        sylphones=[Sylphone.from_dict(s) for s in d["sylphones"]],
        melody_line_ends=[int(e) for e in d["melody_line_ends"]],
        lyrics_line_ends=[int(e) for e in d["lyrics_line_ends"]],
        line_texts=list(d.get("line_texts", [])),
    )


class Dataset:
    def __init__(self, splits: dict[str, list[Segment]], quantizer: QuantizerStats | None = None,
                 meta: dict | None = None):
        self.splits = splits
        self.quantizer = quantizer
        self.meta = meta or {}

    def __getitem__(self, name: str) -> list[Segment]:
        return self.splits.get(name, [])

    def counts(self) -> dict[str, int]:
        return {name: len(segs) for name, segs in self.splits.items()}

    def find(self, segment_id: str) -> Segment:
        for segs in self.splits.values():
            for s in segs:
                if s.segment_id == segment_id:
                    return s
        raise KeyError(segment_id)


def write_archive(ds: Dataset, path) -> None:
    doc = {
        "format": FORMAT,
        "version": VERSION,
        "meta": ds.meta,
        "quantizer": None if ds.quantizer is None else ds.quantizer.to_dict(),
        "counts": ds.counts(),
        "splits": {k: [segment_to_dict(s, ds.quantizer) for s in v] for k, v in ds.splits.items()},
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True, separators=(",", ":")), encoding="utf-8")


def read_archive(path) -> Dataset:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != FORMAT:
        raise ValueError(f"{path} is not a dataset archive")
    if doc.get("version") != VERSION:
        raise ValueError(f"unsupported dataset version {doc.get('version')}")
    q = doc.get("quantizer")
    return Dataset(
        {k: [segment_from_dict(s) for s in v] for k, v in doc["splits"].items()},
        None if q is None else QuantizerStats.from_dict(q),
        doc.get("meta", {}),
    )
