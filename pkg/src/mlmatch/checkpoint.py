"""Versioned JSON checkpoint container.

Parameters are stored as base64 little-endian float64 buffers so a given
model always serializes to the same bytes.
"""

from __future__ import annotations

import base64
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .encoder import DTYPE, DualEncoder, EncoderConfig
from .melody import QuantizerStats
from .phonetics import CONSONANTS, VOWELS, load_stopwords

FORMAT = "mlmatch-checkpoint"
VERSION = 1


def vocabulary_hashes() -> dict[str, str]:
    phones = "\n".join(VOWELS + CONSONANTS).encode()
    stops = "\n".join(sorted(load_stopwords())).encode()
    return {
        "phonemes_sha256": hashlib.sha256(phones).hexdigest(),
        "stopwords_sha256": hashlib.sha256(stops).hexdigest(),
    }


@dataclass
class Checkpoint:
    model: DualEncoder
    quantizer: QuantizerStats
    train_config: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    @property
    def gamma(self) -> float:
        return float(self.train_config.get("gamma", 1.0))

    @property
    def alpha(self) -> float:
        return float(self.train_config.get("alpha", 0.5))

    @property
    def epsilon(self) -> float:
        return float(self.train_config.get("epsilon", 1e-8))


def _encode_tensor(t: torch.Tensor) -> dict:
    arr = t.detach().cpu().numpy().astype("<f8", copy=False)
    return {"shape": list(arr.shape), "data": base64.b64encode(arr.tobytes()).decode("ascii")}


def _decode_tensor(d: dict) -> torch.Tensor:
    arr = np.frombuffer(base64.b64decode(d["data"]), dtype="<f8").reshape(d["shape"])
    return torch.tensor(arr, dtype=DTYPE)


def to_json(ckpt: Checkpoint) -> str:
    doc = {
        "format": FORMAT,
        "version": VERSION,
        "melody_config": ckpt.model.melody.cfg.to_dict(),
        "lyrics_config": ckpt.model.lyrics.cfg.to_dict(),
        "train_config": ckpt.train_config,
        "quantizer": ckpt.quantizer.to_dict(),
        "vocabulary": vocabulary_hashes(),
        "meta": ckpt.meta,
        "parameters": {k: _encode_tensor(v) for k, v in ckpt.model.state_dict().items()},
    }
    return json.dumps(doc, sort_keys=True)


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    Path(path).write_text(to_json(ckpt), encoding="utf-8")


def load_checkpoint(path) -> Checkpoint:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != FORMAT:
        raise ValueError(f"{path} is not a checkpoint file")
    if doc.get("version") != VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('version')}")
    if doc["vocabulary"] != vocabulary_hashes():
        raise ValueError("checkpoint was built with a different phoneme or stopword inventory")
    model = DualEncoder(
        EncoderConfig.from_dict(doc["melody_config"]),
        EncoderConfig.from_dict(doc["lyrics_config"]),
    ).to(DTYPE)
    model.load_state_dict({k: _decode_tensor(v) for k, v in doc["parameters"].items()})
    model.eval()
    return Checkpoint(model, QuantizerStats.from_dict(doc["quantizer"]),
                      doc.get("train_config", {}), doc.get("meta", {}))


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
