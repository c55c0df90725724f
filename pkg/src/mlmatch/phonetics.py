"""Lyrics text to sylphones.

A sylphone is one syllable of a pronunciation: the consonants before the
vowel, the vowel with its lexical stress, and the consonants after it.
Only the rhyming elements (vowel, end consonants), the stress and a
stopword flag reach the 43-D input encoding.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable

import numpy as np

logger = logging.getLogger(__name__)

VOWELS = (
    "AA", "AE", "AH", "AO", "AW", "AY", "EH", "ER",
    "EY", "IH", "IY", "OW", "OY", "UH", "UW",
)
CONSONANTS = (
    "B", "CH", "D", "DH", "F", "G", "HH", "JH", "K", "L", "M", "N",
    "NG", "P", "R", "S", "SH", "T", "TH", "V", "W", "Y", "Z", "ZH",
)
STRESS_LEVELS = (0, 1, 2)

VOWEL_INDEX = {v: i for i, v in enumerate(VOWELS)}
CONSONANT_INDEX = {c: i for i, c in enumerate(CONSONANTS)}

# layout of the encoded vector
VOWEL_OFFSET = 0
STRESS_OFFSET = VOWEL_OFFSET + len(VOWELS)
END_OFFSET = STRESS_OFFSET + len(STRESS_LEVELS)
STOPWORD_OFFSET = END_OFFSET + len(CONSONANTS)
SYLPHONE_DIM = STOPWORD_OFFSET + 1

_ALT_ENTRY = re.compile(r"^(.+)\(\d+\)$")
_TOKEN_STRIP = re.compile(r"[^a-z0-9']")


class OutOfVocabularyError(KeyError):
    """Raised when a lyrics token has no usable pronunciation."""

    def __init__(self, tokens):
        self.tokens = list(tokens)
        super().__init__(", ".join(self.tokens))


@dataclass(frozen=True)
class Sylphone:
    front: tuple[str, ...]
    vowel: str
    stress: int
    end: tuple[str, ...]
    is_stopword: bool = False
    word: str = ""
    syllable_index: int = 0

    def __post_init__(self):
        if self.vowel not in VOWEL_INDEX:
            raise ValueError(f"unknown vowel {self.vowel!r}")
        if self.stress not in STRESS_LEVELS:
            raise ValueError(f"invalid stress {self.stress!r}")
        for c in self.front + self.end:
            if c not in CONSONANT_INDEX:
                raise ValueError(f"unknown consonant {c!r}")

    @property
    def rhyme(self) -> tuple[str, tuple[str, ...]]:
        """Rhyming elements: vowel and end consonants."""
        return self.vowel, self.end

    @property
    def key(self) -> tuple:
        """Identity as seen by the lyrics encoder."""
        return self.vowel, self.stress, self.end, self.is_stopword

    def __str__(self):
        front = ",".join(self.front) or "-"
        end = ",".join(self.end) or "-"
        return f"[{front}|{self.vowel}{self.stress}|{end}]"

    def to_dict(self) -> dict:
        return {
            "front": list(self.front),
            "vowel": self.vowel,
            "stress": self.stress,
            "end": list(self.end),
            "stop": self.is_stopword,
            "word": self.word,
            "syl": self.syllable_index,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Sylphone":
        return cls(
            front=tuple(d["front"]),
            vowel=d["vowel"],
            stress=int(d["stress"]),
            end=tuple(d["end"]),
            is_stopword=bool(d["stop"]),
            word=d.get("word", ""),
            syllable_index=int(d.get("syl", 0)),
        )


def load_stopwords() -> frozenset[str]:
    """The embedded English stopword list."""
    text = resources.files("mlmatch").joinpath("data/stopwords_en.txt").read_text("utf-8")
    return frozenset(w.strip() for w in text.splitlines() if w.strip())


def parse_pronouncing_dictionary(path) -> dict[str, tuple[str, ...]]:
    """Read a CMU-format pronouncing dictionary.

    Keys are lowercased. Alternate pronunciations (``WORD(2)``) are ignored
    so the first listed pronunciation always wins.
    """
    path = Path(path)
    entries: dict[str, tuple[str, ...]] = {}
    with path.open(encoding="latin-1") as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line or line.startswith(";;;"):
                continue
            parts = line.split()
            if len(parts) < 2:
                continue
            word = parts[0].lower()
            if _ALT_ENTRY.match(word):
                continue
            entries.setdefault(word, tuple(parts[1:]))
    return entries


def _split_phoneme(ph: str) -> tuple[str, int | None]:
    if ph[-1].isdigit():
        return ph[:-1], int(ph[-1])
    return ph, None


def syllabify(phonemes: Iterable[str], word: str = "", is_stopword: bool = False) -> list[Sylphone]:
    """Group a phoneme sequence into sylphones.

    Consonants between two vowels all go to the onset of the following
    syllable; leading consonants open the first syllable and trailing ones
    close the last.

    Raises:
        OutOfVocabularyError: if the sequence has no vowel.
        ValueError: on symbols outside the ARPABET inventory.
    """
    onsets: list[list[str]] = []
    nuclei: list[tuple[str, int]] = []
    pending: list[str] = []
    for ph in phonemes:
        base, stress = _split_phoneme(ph)
        if base in VOWEL_INDEX:
            onsets.append(pending)
            nuclei.append((base, 1 if stress is None else stress))
            pending = []
        elif base in CONSONANT_INDEX:
            pending.append(base)
        else:
            raise ValueError(f"unknown phoneme {ph!r}")
    if not nuclei:
        raise OutOfVocabularyError([word or " ".join(phonemes)])
    out = []
    for k, ((vowel, stress), onset) in enumerate(zip(nuclei, onsets)):
        end = tuple(pending) if k == len(nuclei) - 1 else ()
        out.append(Sylphone(tuple(onset), vowel, stress, end, is_stopword, word, k))
    return out


def encode_sylphone(s: Sylphone) -> np.ndarray:
    """43-D multi-hot: vowel, stress, end consonants, stopword bit."""
    v = np.zeros(SYLPHONE_DIM)
    v[VOWEL_OFFSET + VOWEL_INDEX[s.vowel]] = 1.0
    v[STRESS_OFFSET + s.stress] = 1.0
    for c in s.end:
        v[END_OFFSET + CONSONANT_INDEX[c]] = 1.0
    v[STOPWORD_OFFSET] = float(s.is_stopword)
    return v


def decode_sylphone(vec) -> tuple[str, int, tuple[str, ...], bool]:
    """Inverse of :func:`encode_sylphone` on the encoded fields.

    End consonants come back in inventory order, which is the only order
    the multi-hot vector can carry.
    """
    vec = np.asarray(vec)
    vowel = VOWELS[int(np.argmax(vec[VOWEL_OFFSET:STRESS_OFFSET]))]
    stress = int(np.argmax(vec[STRESS_OFFSET:END_OFFSET]))
    end = tuple(c for i, c in enumerate(CONSONANTS) if vec[END_OFFSET + i] > 0.5)
    return vowel, stress, end, bool(vec[STOPWORD_OFFSET] > 0.5)


def encode_sequence(sylphones) -> np.ndarray:
    if not len(sylphones):
        return np.zeros((0, SYLPHONE_DIM))
    return np.stack([encode_sylphone(s) for s in sylphones])


def tokenize(text: str) -> list[str]:
    tokens = []
    for raw in text.lower().replace("-", " ").split():
        tok = _TOKEN_STRIP.sub("", raw)
        if tok.strip("'"):
            tokens.append(tok)
    return tokens


class Phonetics:
    """Dictionary-backed syllabifier.

    Args:
        dictionary: word -> phoneme tuple, as from
            :func:`parse_pronouncing_dictionary`.
        stopwords: lowercased stopword set; defaults to the embedded list.
    """

    def __init__(self, dictionary: dict[str, tuple[str, ...]], stopwords=None):
        self.dictionary = dictionary
        self.stopwords = load_stopwords() if stopwords is None else frozenset(stopwords)
        self._cache: dict[str, list[Sylphone] | None] = {}

    @classmethod
    def from_file(cls, path, stopwords=None) -> "Phonetics":
        return cls(parse_pronouncing_dictionary(path), stopwords)

    def lookup(self, token: str) -> tuple[str, ...] | None:
        phones = self.dictionary.get(token)
        if phones is None and token.strip("'") != token:
            phones = self.dictionary.get(token.strip("'"))
        return phones

    def word_sylphones(self, token: str) -> list[Sylphone] | None:
        if token not in self._cache:
            phones = self.lookup(token)
            result = None
            if phones is not None:
                stop = token in self.stopwords or token.strip("'") in self.stopwords
                try:
                    result = syllabify(phones, token, stop)
                except (OutOfVocabularyError, ValueError):
                    result = None
            self._cache[token] = result
        return self._cache[token]

    def text_to_sylphones(self, text: str) -> list[Sylphone]:
        """Sylphones of a lyrics line, in word order.

        Raises:
            OutOfVocabularyError: listing every token without a usable
                pronunciation.
        """
        out: list[Sylphone] = []
        missing = []
        for tok in tokenize(text):
            syls = self.word_sylphones(tok)
            if syls is None:
                missing.append(tok)
            else:
                out.extend(syls)
        if missing:
            raise OutOfVocabularyError(missing)
        return out


def text_to_sylphones(line_text: str, dictionary, stopwords=None) -> list[Sylphone]:
    return Phonetics(dictionary, stopwords).text_to_sylphones(line_text)
