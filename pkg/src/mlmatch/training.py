"""Contrastive alignment loss and the training loop.

For a batch of B melody/lyrics pairs every melody is scored against its own
lyrics and against order-shuffled versions of the other B-1 lyrics with
soft-DTW over cosine distances (and symmetrically for every lyrics query).
Costs get the length-difference penalty, are Z-scored per query and fed to
a two-way InfoNCE.
"""

from __future__ import annotations

import copy
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from .align import accumulate, soft_alignment
from .checkpoint import Checkpoint
from .encoder import DTYPE, DualEncoder, EncoderConfig, init_encoders
from .melody import QuantizerStats, featurize_melody, fit_quantizers
from .phonetics import encode_sequence

logger = logging.getLogger(__name__)


class DivergenceError(RuntimeError):
    """Raised when the training loss stops being finite."""


@dataclass
class TrainConfig:
    batch_size: int = 32
    gamma: float = 1.0
    alpha: float = 0.5
    tau: float = 0.1
    epsilon: float = 1e-8
    base_lr: float = 1e-5
    weight_decay: float = 0.01
    epochs: int = 20
    warmup_epochs: int = 2
    grad_clip_norm: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        for name in ("gamma", "tau", "epsilon", "base_lr", "grad_clip_norm"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if self.epochs < 1 or self.warmup_epochs < 0 or self.weight_decay < 0:
            raise ValueError("epochs >= 1, warmup_epochs >= 0 and weight_decay >= 0 required")

    def to_dict(self) -> dict:
        return asdict(self)


# soft-DTW as an autograd op


class _SoftDTW(torch.autograd.Function):
    @staticmethod
    def forward(ctx, costs, n, m, gamma):
        C = costs.detach().cpu().numpy()
        R = accumulate(C, gamma)
        kk = np.arange(C.shape[0])
        ctx.state = (C, R, n, m, gamma)
        return torch.as_tensor(R[kk, n, m], dtype=costs.dtype)

    @staticmethod
    def backward(ctx, grad):
        C, R, n, m, gamma = ctx.state
        E = torch.as_tensor(soft_alignment(R, C, n, m, gamma), dtype=grad.dtype)
        return E * grad[:, None, None], None, None, None


def soft_dtw(costs: torch.Tensor, n, m, gamma: float = 1.0) -> torch.Tensor:
    """Differentiable soft-DTW over a padded (K, N, M) stack with per-item extents."""
    n = np.asarray(n, dtype=int).reshape(-1)
    m = np.asarray(m, dtype=int).reshape(-1)
    return _SoftDTW.apply(costs, n, m, float(gamma))


# loss pieces


def regularized_cost(raw, len_diffs, alpha: float, epsilon: float = 1e-8) -> torch.Tensor:
    """Length-informed cost for each query row (last axis = candidates).

    ``(1 - alpha) * D + alpha * |n - m| / (max |n - m| + eps) * (max D - min D)``
    """
    raw = torch.as_tensor(raw, dtype=DTYPE)
    diffs = torch.as_tensor(len_diffs, dtype=raw.dtype)
    spread = raw.amax(dim=-1, keepdim=True) - raw.amin(dim=-1, keepdim=True)
    penalty = diffs / (diffs.amax(dim=-1, keepdim=True) + epsilon) * spread
    return (1.0 - alpha) * raw + alpha * penalty


def length_penalty(raw, len_diffs, alpha: float, epsilon: float = 1e-8) -> torch.Tensor:
    raw = torch.as_tensor(raw, dtype=DTYPE)
    return regularized_cost(raw, len_diffs, alpha, epsilon) - (1.0 - alpha) * raw


def zscore_rows(grid) -> torch.Tensor:
    """Per-row Z-score with population std; constant rows become zeros."""
    grid = torch.as_tensor(grid, dtype=DTYPE)
    centered = grid - grid.mean(dim=-1, keepdim=True)
    std = grid.std(dim=-1, unbiased=False, keepdim=True)
    safe = torch.where(std > 0, std, torch.ones_like(std))
    return torch.where(std > 0, centered / safe, centered)


def zscore_columns(grid) -> torch.Tensor:
    return zscore_rows(torch.as_tensor(grid, dtype=DTYPE).T).T


def cal_loss(grid, tau: float = 0.1, columns=None) -> torch.Tensor:
    """Two-way InfoNCE over negative alignment costs.

    ``grid[i, j]`` is the (normalized) cost of melody i against lyrics j with
    positives on the diagonal. The lyrics-to-melody term reads ``columns``
    (indexed [lyrics j, melody i]) when given, else the columns of ``grid``.
    """
    grid = torch.as_tensor(grid, dtype=DTYPE)
    if grid.ndim != 2 or grid.shape[0] != grid.shape[1]:
        raise ValueError("cost grid must be square")
    other = grid.T if columns is None else torch.as_tensor(columns, dtype=DTYPE)
    target = torch.arange(grid.shape[0])
    ce = torch.nn.functional.cross_entropy
    return ce(-grid / tau, target) + ce(-other / tau, target)


# negatives


def make_negatives(melodies: Sequence[np.ndarray], lyrics: Sequence[np.ndarray], rng: np.random.Generator):
    """Order-shuffled copies of every melody and lyrics sequence in a batch.

    Returns:
        (shuffled melodies, shuffled lyrics), aligned with the inputs. Query i
        uses ``lyrics[i]`` as its positive and ``shuffled_lyrics[j]`` for
        every j != i as negatives (see :func:`candidate_lists`).
    """
    if len(melodies) != len(lyrics):
        raise ValueError("melody and lyrics batches differ in size")
    if len(melodies) < 2:
        raise ValueError("need at least two pairs to build negatives")
    shuf_mel = [np.asarray(x)[rng.permutation(len(x))] for x in melodies]
    shuf_lyr = [np.asarray(y)[rng.permutation(len(y))] for y in lyrics]
    return shuf_mel, shuf_lyr


def candidate_lists(positives: Sequence, shuffled: Sequence) -> list[list]:
    """Per-query candidates: own positive at position i, shuffled others elsewhere."""
    B = len(positives)
    return [[positives[i] if j == i else shuffled[j] for j in range(B)] for i in range(B)]


@dataclass
class BatchGrids:
    raw_m2l: torch.Tensor
    raw_l2m: torch.Tensor
    len_diffs: torch.Tensor
    loss: torch.Tensor


def batch_grids(model: DualEncoder, melodies, lyrics, rng, cfg: TrainConfig) -> BatchGrids:
    """Encode one batch plus its shuffled negatives and compute the loss."""
    B = len(melodies)
    shuf_mel, shuf_lyr = make_negatives(melodies, lyrics, rng)
    X, nx = model.encode_padded(list(melodies) + shuf_mel, "melody")
    Y, ny = model.encode_padded(list(lyrics) + shuf_lyr, "lyrics")
    Xp, Xs, Yp, Ys = X[:B], X[B:], Y[:B], Y[B:]
    n, m = nx[:B].numpy(), ny[:B].numpy()
    N, M = Xp.shape[1], Yp.shape[1]

    eye = torch.eye(B, dtype=torch.bool)[:, :, None, None]
    pos = 1.0 - torch.einsum("bnd,bmd->bnm", Xp, Yp)
    m2l = torch.where(eye, pos.unsqueeze(1), 1.0 - torch.einsum("ind,jmd->ijnm", Xp, Ys))
    l2m = torch.where(eye, pos.unsqueeze(1), 1.0 - torch.einsum("ind,jmd->jinm", Xs, Yp))

    ii, jj = np.meshgrid(np.arange(B), np.arange(B), indexing="ij")
    raw_m2l = soft_dtw(m2l.reshape(B * B, N, M), n[ii].ravel(), m[jj].ravel(), cfg.gamma).reshape(B, B)
    # l2m[j, i] pairs lyrics j with melody i
    raw_l2m = soft_dtw(l2m.reshape(B * B, N, M), n[jj].ravel(), m[ii].ravel(), cfg.gamma).reshape(B, B)

    diffs = torch.as_tensor(np.abs(n[:, None] - m[None, :]), dtype=DTYPE)
    z_m2l = zscore_rows(regularized_cost(raw_m2l, diffs, cfg.alpha, cfg.epsilon))
    z_l2m = zscore_rows(regularized_cost(raw_l2m, diffs.T, cfg.alpha, cfg.epsilon))
    return BatchGrids(raw_m2l, raw_l2m, diffs, cal_loss(z_m2l, cfg.tau, columns=z_l2m))


# data


@dataclass
class PairFeatures:
    segment_id: str
    melody: np.ndarray
    lyrics: np.ndarray


def featurize_segments(segments, stats: QuantizerStats) -> list[PairFeatures]:
    return [
        PairFeatures(s.segment_id, featurize_melody(s.notes, stats), encode_sequence(s.sylphones))
        for s in segments
    ]


def _batches(n_items: int, batch_size: int, order=None) -> list[np.ndarray]:
    idx = np.arange(n_items) if order is None else np.asarray(order)
    out = [idx[k:k + batch_size] for k in range(0, n_items, batch_size)]
    return [b for b in out if len(b) >= 2]


def lr_factor(step: int, warmup_steps: int, total_steps: int) -> float:
    """Linear warmup to 1 over ``warmup_steps``, then cosine decay to 0."""
    if warmup_steps > 0 and step <= warmup_steps:
        return step / warmup_steps
    span = max(total_steps - warmup_steps, 1)
    progress = min(max(step - warmup_steps, 0) / span, 1.0)
    return 0.5 * (1.0 + math.cos(math.pi * progress))


def evaluate_loss(model: DualEncoder, pairs: Sequence[PairFeatures], cfg: TrainConfig, seed) -> float:
    """Mean loss over fixed validation batches with a fixed shuffling stream."""
    rng = np.random.default_rng(seed)
    losses = []
    was_training = model.training
    model.eval()
    with torch.no_grad():
        for b in _batches(len(pairs), cfg.batch_size):
            g = batch_grids(model, [pairs[k].melody for k in b], [pairs[k].lyrics for k in b], rng, cfg)
            losses.append(float(g.loss))
    model.train(was_training)
    return float(np.mean(losses)) if losses else math.nan


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    history: list[dict] = field(default_factory=list)
    best_epoch: int = 0


def train(train_segments, val_segments, melody_cfg: EncoderConfig, lyrics_cfg: EncoderConfig,
          cfg: TrainConfig, log_path=None) -> TrainResult:
    """Fit the dual encoder and keep the lowest-validation-loss parameters.

    Epoch 0 in the history is the untrained model's validation loss.
    """
    if len(train_segments) < 2 or len(val_segments) < 2:
        raise ValueError("training and validation sets need at least two segments each")
    torch.manual_seed(cfg.seed)
    stats = fit_quantizers(s.notes for s in train_segments)
    train_pairs = featurize_segments(train_segments, stats)
    val_pairs = featurize_segments(val_segments, stats)
    longest = max(max(len(p.melody), len(p.lyrics)) for p in train_pairs + val_pairs)
    for c in (melody_cfg, lyrics_cfg):
        if longest > c.max_len:
            raise ValueError(f"segments up to {longest} long exceed max_len {c.max_len}")

    model = init_encoders(melody_cfg, lyrics_cfg, cfg.seed)
    rng = np.random.default_rng([cfg.seed, 1])
    val_seed = [cfg.seed, 2]
    steps_per_epoch = len(_batches(len(train_pairs), cfg.batch_size))
    total = steps_per_epoch * cfg.epochs
    warmup = steps_per_epoch * cfg.warmup_epochs
    opt = torch.optim.AdamW(model.parameters(), lr=cfg.base_lr, weight_decay=cfg.weight_decay)
    sched = torch.optim.lr_scheduler.LambdaLR(opt, lambda s: lr_factor(s, warmup, total))

    log_fh = open(log_path, "w", encoding="utf-8") if log_path else None
    history = []

    def record(entry):
        history.append(entry)
        logger.info("epoch %(epoch)d train %(train_loss)s val %(val_loss).4f lr %(lr).3g", entry)
        if log_fh:
            log_fh.write(json.dumps(entry) + "\n")
            log_fh.flush()

    try:
        record({"epoch": 0, "train_loss": None,
                "val_loss": evaluate_loss(model, val_pairs, cfg, val_seed), "lr": 0.0})
        best_val, best_state, best_epoch = math.inf, copy.deepcopy(model.state_dict()), 0
        for epoch in range(1, cfg.epochs + 1):
            model.train()
            t0 = time.perf_counter()
            order = rng.permutation(len(train_pairs))
            losses = []
            for b in _batches(len(train_pairs), cfg.batch_size, order):
                g = batch_grids(model, [train_pairs[k].melody for k in b],
                                [train_pairs[k].lyrics for k in b], rng, cfg)
                if not torch.isfinite(g.loss):
                    raise DivergenceError(f"non-finite loss at epoch {epoch}: {g.loss.item()}")
                opt.zero_grad()
                g.loss.backward()
                torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.grad_clip_norm)
                opt.step()
                sched.step()
                losses.append(g.loss.item())
            val = evaluate_loss(model, val_pairs, cfg, val_seed)
            if not math.isfinite(val):
                raise DivergenceError(f"non-finite validation loss at epoch {epoch}")
            record({"epoch": epoch, "train_loss": float(np.mean(losses)), "val_loss": val,
                    "lr": opt.param_groups[0]["lr"]})
            logger.debug("epoch %d took %.2fs", epoch, time.perf_counter() - t0)
            if val < best_val:
                best_val, best_state, best_epoch = val, copy.deepcopy(model.state_dict()), epoch
    finally:
        if log_fh:
            log_fh.close()

    model.load_state_dict(best_state)
    model.eval()
    meta = {"best_epoch": best_epoch, "best_val_loss": best_val, "seed": cfg.seed,
            "train_segments": len(train_segments), "val_segments": len(val_segments)}
    return TrainResult(Checkpoint(model, stats, cfg.to_dict(), meta), history, best_epoch)
