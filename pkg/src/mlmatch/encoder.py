"""Dual transformer encoders for melody and lyrics.

Each side projects its multi-hot inputs to ``model_dim``, adds a learned
positional embedding, runs a stack of pre-norm self-attention blocks and
L2-normalizes every position. Parameters are float64 so finite-difference
checks stay meaningful.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace
from typing import Sequence

import numpy as np
import torch
from torch import nn

from .melody import MELODY_DIM
from .phonetics import SYLPHONE_DIM

DTYPE = torch.float64
SIDES = ("melody", "lyrics")


@dataclass(frozen=True)
class EncoderConfig:
    input_dim: int
    model_dim: int = 64
    layers: int = 1
    heads: int = 2
    feedforward_dim: int = 128
    max_len: int = 512
    dropout: float = 0.0
    positional: bool = True

    def __post_init__(self):
        for name in ("input_dim", "model_dim", "layers", "heads", "feedforward_dim", "max_len"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.model_dim % self.heads:
            raise ValueError("model_dim must be divisible by heads")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "EncoderConfig":
        return cls(**d)


DESK = {"model_dim": 64, "layers": 1, "heads": 2, "feedforward_dim": 128}
REFERENCE = {"model_dim": 256, "layers": 2, "heads": 4, "feedforward_dim": 1024}


def make_configs(preset: str = "desk", **overrides) -> tuple[EncoderConfig, EncoderConfig]:
    """(melody, lyrics) configs for the ``desk`` or ``reference`` size."""
    base = {"desk": DESK, "reference": REFERENCE}[preset]
    kw = {**base, **overrides}
    return EncoderConfig(MELODY_DIM, **kw), EncoderConfig(SYLPHONE_DIM, **kw)


class SequenceEncoder(nn.Module):
    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.cfg = cfg
        self.proj = nn.Linear(cfg.input_dim, cfg.model_dim)
        self.pos = nn.Embedding(cfg.max_len, cfg.model_dim)
        layer = nn.TransformerEncoderLayer(
            cfg.model_dim, cfg.heads, cfg.feedforward_dim,
            dropout=cfg.dropout, batch_first=True, norm_first=True,
        )
        self.blocks = nn.TransformerEncoder(layer, cfg.layers, enable_nested_tensor=False)

    def forward(self, x: torch.Tensor, lengths: torch.Tensor | None = None) -> torch.Tensor:
        """(B, L, input_dim) -> (B, L, model_dim), unit rows; padded rows are zero."""
        B, L, _ = x.shape
        if L > self.cfg.max_len:
            raise ValueError(f"sequence length {L} exceeds max_len {self.cfg.max_len}")
        h = self.proj(x)
        if self.cfg.positional:
            h = h + self.pos.weight[:L].unsqueeze(0)
        mask = None
        if lengths is not None:
            mask = torch.arange(L).unsqueeze(0) >= lengths.unsqueeze(1)
            if not mask.any():
                mask = None
        h = self.blocks(h, src_key_padding_mask=mask)
        h = nn.functional.normalize(h, dim=-1)
        if mask is not None:
            h = h.masked_fill(mask.unsqueeze(-1), 0.0)
        return h


class DualEncoder(nn.Module):
    def __init__(self, melody_cfg: EncoderConfig, lyrics_cfg: EncoderConfig):
        super().__init__()
        if melody_cfg.model_dim != lyrics_cfg.model_dim:
            raise ValueError("melody and lyrics encoders must share model_dim")
        self.melody = SequenceEncoder(melody_cfg)
        self.lyrics = SequenceEncoder(lyrics_cfg)

    def side(self, side: str) -> SequenceEncoder:
        if side not in SIDES:
            raise ValueError(f"side must be one of {SIDES}")
        return getattr(self, side)

    def encode_padded(self, features: Sequence, side: str):
        """Encode a list of (L_k, input_dim) arrays as one padded batch.

        Returns:
            (embeddings (B, L_max, model_dim), lengths (B,))
        """
        enc = self.side(side)
        lengths = [len(f) for f in features]
        if any(k == 0 for k in lengths):
            raise ValueError("cannot encode an empty sequence")
        x = torch.zeros(len(features), max(lengths), enc.cfg.input_dim, dtype=DTYPE)
        for k, f in enumerate(features):
            x[k, :lengths[k]] = torch.as_tensor(np.asarray(f), dtype=DTYPE)
        lens = torch.tensor(lengths)
        return enc(x, lens), lens

    def encode(self, features, side: str) -> torch.Tensor:
        """(L, input_dim) -> (L, model_dim) with unit-norm rows."""
        f = torch.as_tensor(np.asarray(features), dtype=DTYPE)
        if f.ndim != 2 or f.shape[0] == 0:
            raise ValueError("features must be a non-empty (L, input_dim) array")
        enc = self.side(side)
        if f.shape[1] != enc.cfg.input_dim:
            raise ValueError(f"{side} features must have width {enc.cfg.input_dim}")
        return enc(f.unsqueeze(0))[0]


def init_encoders(melody_cfg: EncoderConfig, lyrics_cfg: EncoderConfig, seed: int = 0) -> DualEncoder:
    """Build both encoders with seeded scaled-uniform (Glorot) initialization."""
    model = DualEncoder(melody_cfg, lyrics_cfg).to(DTYPE)
    g = torch.Generator().manual_seed(int(seed))
    with torch.no_grad():
        for name, p in model.named_parameters():
            if name.endswith("pos.weight"):
                nn.init.uniform_(p, -0.1, 0.1, generator=g)
            elif p.ndim >= 2:
                nn.init.xavier_uniform_(p, generator=g)
            elif "norm" in name and name.endswith("weight"):
                p.fill_(1.0)
            else:
                p.zero_()
    model.eval()
    return model


def parameter_count(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())


def flat_parameters(model: nn.Module) -> torch.Tensor:
    return nn.utils.parameters_to_vector(model.parameters()).detach().clone()


def set_flat_parameters(model: nn.Module, vec: torch.Tensor) -> None:
    nn.utils.vector_to_parameters(vec, model.parameters())


def parameter_gradients(model: DualEncoder, outputs: torch.Tensor, upstream) -> dict[str, torch.Tensor]:
    """Backpropagate ``upstream`` (same shape as ``outputs``) to every parameter.

    ``outputs`` must come from a forward pass with autograd enabled.
    Parameters the outputs do not depend on get zero gradients.
    """
    names, params = zip(*model.named_parameters())
    grads = torch.autograd.grad(
        outputs, params, grad_outputs=torch.as_tensor(upstream, dtype=outputs.dtype),
        allow_unused=True, retain_graph=True,
    )
    return {
        n: torch.zeros_like(p) if g is None else g
        for n, p, g in zip(names, params, grads)
    }


def with_max_len(cfg: EncoderConfig, max_len: int) -> EncoderConfig:
    return replace(cfg, max_len=max_len)
