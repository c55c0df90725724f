"""Per-note melody features.

Each note becomes a 177-D binary vector::

    [pitch change magnitude one-hot (128) | sign (1) | duration bin (24) | IOI bin (24)]

Pitch change is taken against the first note of the sequence. Durations and
inter-onset intervals are log-scaled, normalized with bounds fitted on the
training set, and cut into 24 uniform bins.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

PITCH_BINS = 128
TIME_BINS = 24
SIGN_OFFSET = PITCH_BINS
DURATION_OFFSET = SIGN_OFFSET + 1
IOI_OFFSET = DURATION_OFFSET + TIME_BINS
MELODY_DIM = IOI_OFFSET + TIME_BINS

MIN_SECONDS = 1e-3
LOG_FLOOR = math.log(MIN_SECONDS)


@dataclass(frozen=True)
class QuantizerStats:
    log_duration_min: float
    log_duration_max: float
    log_ioi_min: float
    log_ioi_max: float
    bins: int = TIME_BINS

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "QuantizerStats":
        return cls(**d)


def _log_seconds(x) -> np.ndarray:
    return np.log(np.maximum(np.asarray(x, dtype=float), MIN_SECONDS))


def inter_onset_intervals(notes) -> np.ndarray:
    """IOI per note; the first note gets 0 s."""
    onsets = np.array([n.onset for n in notes], dtype=float)
    ioi = np.zeros_like(onsets)
    ioi[1:] = np.diff(onsets)
    return ioi


def _bounds(values: np.ndarray) -> tuple[float, float]:
    lo, hi = float(values.min()), float(values.max())
    if hi - lo <= 0.0:
        lo, hi = lo - 0.5, hi + 0.5
    return lo, hi


def fit_quantizers(note_sequences) -> QuantizerStats:
    """Log duration / log IOI bounds over every training note.

    ``note_sequences`` is an iterable of note lists (one per segment).
    """
    durs, iois = [], []
    for notes in note_sequences:
        if not len(notes):
            continue
        durs.append(_log_seconds([n.duration for n in notes]))
        iois.append(_log_seconds(inter_onset_intervals(notes)))
    if not durs:
        raise ValueError("cannot fit quantizers on an empty training set")
    dmin, dmax = _bounds(np.concatenate(durs))
    imin, imax = _bounds(np.concatenate(iois))
    return QuantizerStats(dmin, dmax, imin, imax)


def quantize(log_values, lo: float, hi: float, bins: int = TIME_BINS) -> np.ndarray:
    scaled = (np.asarray(log_values, dtype=float) - lo) / (hi - lo)
    return np.clip(np.floor(bins * scaled), 0, bins - 1).astype(int)


def note_tokens(notes, stats: QuantizerStats) -> np.ndarray:
    """Compact form of the features: (pitch change, sign, duration bin, IOI bin) per note."""
    if not len(notes):
        raise ValueError("melody must contain at least one note")
    pitches = np.array([n.pitch for n in notes], dtype=int)
    delta = pitches - pitches[0]
    change = np.clip(np.abs(delta), 0, PITCH_BINS - 1)
    sign = (delta >= 0).astype(int)
    dur = quantize(_log_seconds([n.duration for n in notes]),
                   stats.log_duration_min, stats.log_duration_max, stats.bins)
    ioi = quantize(_log_seconds(inter_onset_intervals(notes)),
                   stats.log_ioi_min, stats.log_ioi_max, stats.bins)
    return np.stack([change, sign, dur, ioi], axis=1)


def tokens_to_features(tokens: np.ndarray) -> np.ndarray:
    tokens = np.asarray(tokens, dtype=int)
    out = np.zeros((len(tokens), MELODY_DIM))
    rows = np.arange(len(tokens))
    out[rows, tokens[:, 0]] = 1.0
    out[rows, SIGN_OFFSET] = tokens[:, 1]
    out[rows, DURATION_OFFSET + tokens[:, 2]] = 1.0
    out[rows, IOI_OFFSET + tokens[:, 3]] = 1.0
    return out


def featurize_melody(notes, stats: QuantizerStats) -> np.ndarray:
    """(n, 177) feature matrix for a note sequence."""
    return tokens_to_features(note_tokens(notes, stats))
