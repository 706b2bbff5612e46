"""Deterministic contrastive training with AdamW and warmup + cosine decay."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from . import tape as T
from .geometry import radius
from .losses import LossConfig, contrastive_loss
from .model import ModelConfig, embed
from .textaug import random_text_prune


class DivergenceError(RuntimeError):
    """Training produced a non-finite value."""

    def __init__(self, step: int, detail: str = ""):
        self.step = step
        super().__init__(f"training diverged at step {step}" + (f": {detail}" if detail else ""))


@dataclass(frozen=True)
class AdamWHyper:
    lr: float = 3e-3
    beta1: float = 0.9
    beta2: float = 0.98
    eps: float = 1e-8
    weight_decay: float = 0.05


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 2000
    batch_size: int = 64
    lr: float = 3e-3
    lr_start: float = 3e-5
    lr_min: float = 3e-4
    warmup_steps: int = 100
    beta1: float = 0.9
    beta2: float = 0.98
    eps: float = 1e-8
    weight_decay: float = 0.05
    rtp_window: int = 0
    log_interval: int = 10
    seed: int = 0
    loss: LossConfig = field(default_factory=LossConfig)

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.lr > 0:
            raise ValueError("lr must be > 0")
        if self.lr_start < 0 or self.lr_min < 0:
            raise ValueError("lr_start and lr_min must be >= 0")
        if self.warmup_steps < 0:
            raise ValueError("warmup_steps must be >= 0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("betas must be in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        if self.rtp_window < 0:
            raise ValueError("rtp_window must be >= 0")
        if self.log_interval < 1:
            raise ValueError("log_interval must be >= 1")

    @property
    def hyper(self) -> AdamWHyper:
        return AdamWHyper(self.lr, self.beta1, self.beta2, self.eps, self.weight_decay)


@dataclass
class StepLog:
    step: int
    lr: float
    loss: float
    image_radius_mean: float
    image_radius_std: float
    text_radius_mean: float
    text_radius_std: float
    grad_norm: float
    text_cos_min: float
    selected: List[int]

    CSV_FIELDS = ("step", "lr", "loss", "image_radius_mean", "image_radius_std",
                  "text_radius_mean", "text_radius_std", "grad_norm", "text_cos_min", "selected")

    def csv_row(self) -> list:
        row = [self.step]
        for name in self.CSV_FIELDS[1:-1]:
            row.append(f"{getattr(self, name):.6g}")
        row.append(" ".join(str(c) for c in self.selected))
        return row


def learning_rate(step: int, cfg: TrainConfig) -> float:
    """Linear warmup from ``lr_start`` to ``lr``, then cosine decay to ``lr_min``."""
    if step < cfg.warmup_steps:
        return cfg.lr_start + (cfg.lr - cfg.lr_start) * step / cfg.warmup_steps
    span = max(cfg.steps - 1 - cfg.warmup_steps, 1)
    progress = min((step - cfg.warmup_steps) / span, 1.0)
    return cfg.lr_min + 0.5 * (cfg.lr - cfg.lr_min) * (1.0 + math.cos(math.pi * progress))


@dataclass
class AdamState:
    m: Dict[str, np.ndarray]
    v: Dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params: Dict[str, np.ndarray]) -> "AdamState":
        return cls({k: np.zeros_like(p) for k, p in params.items()},
                   {k: np.zeros_like(p) for k, p in params.items()})


def adamw_step(params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray], state: AdamState,
               hyper: AdamWHyper, lr: Optional[float] = None):
    """One AdamW update with decoupled weight decay; returns new ``(params, state)``."""
    lr = hyper.lr if lr is None else lr
    t = state.t + 1
    bc1 = 1.0 - hyper.beta1 ** t
    bc2 = 1.0 - hyper.beta2 ** t
    new_p, new_m, new_v = {}, {}, {}
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise T.ShapeError(f"gradient for {name!r} has shape {g.shape}, parameter {p.shape}")
        m = hyper.beta1 * state.m[name] + (1.0 - hyper.beta1) * g
        v = hyper.beta2 * state.v[name] + (1.0 - hyper.beta2) * g * g
        decayed = p * (1.0 - lr * hyper.weight_decay)
        new_p[name] = decayed - lr * (m / bc1) / (np.sqrt(v / bc2) + hyper.eps)
        new_m[name], new_v[name] = m, v
    return new_p, AdamState(new_m, new_v, t)


def batch_indices(n: int, cfg: TrainConfig) -> Iterator[Tuple[np.ndarray, int]]:
    """Yield ``(indices, epoch)`` per step from per-epoch seeded permutations."""
    bs = min(cfg.batch_size, n)
    epoch, pos = 0, 0
    perm = np.random.default_rng([cfg.seed, 3, epoch]).permutation(n)
    for _ in range(cfg.steps):
        if pos + bs > n:
            epoch += 1
            pos = 0
            perm = np.random.default_rng([cfg.seed, 3, epoch]).permutation(n)
        yield perm[pos:pos + bs], epoch
        pos += bs


def prune_captions(seqs: Sequence[Sequence[int]], idx: np.ndarray, epoch: int, cfg: TrainConfig) -> List[list]:
    """Random Text Pruning with one stream per (seed, example, epoch)."""
    if cfg.rtp_window == 0:
        return [list(seqs[i]) for i in idx]
    out = []
    for i in idx:
        rng = np.random.default_rng([cfg.seed, 4, int(i), epoch])
        out.append(random_text_prune(seqs[i], cfg.rtp_window, rng)[0])
    return out


def embedding_radii(E: np.ndarray, U: np.ndarray, space: str, model_cfg: ModelConfig):
    """Per-example image radius (mean over queries) and per-caption radius.

    In Euclidean space the Euclidean norm stands in for the radius.
    """
    if space == "hyperbolic":
        ball = model_cfg.ball
        return radius(E, ball).mean(axis=-1), radius(U, ball)
    return np.linalg.norm(E, axis=-1).mean(axis=-1), np.linalg.norm(U, axis=-1)


def min_pairwise_cosine(U: np.ndarray) -> float:
    """Smallest cosine similarity between distinct rows (1.0 for a single row)."""
    if len(U) < 2:
        return 1.0
    unit = U / np.maximum(np.linalg.norm(U, axis=-1, keepdims=True), 1e-15)
    sims = unit @ unit.T
    return float(np.min(sims[~np.eye(len(U), dtype=bool)]))


def text_collapsed(logs: Sequence[StepLog], threshold: float = 0.99) -> bool:
    """True if at some logged step every pair of caption embeddings had cosine > threshold."""
    return any(log.text_cos_min > threshold for log in logs)


def train(patches: np.ndarray, captions: Sequence[Sequence[int]], params: Dict[str, np.ndarray],
          cfg: TrainConfig, model_cfg: ModelConfig) -> Tuple[Dict[str, np.ndarray], List[StepLog]]:
    """Run ``cfg.steps`` optimiser steps; returns final parameters and the step logs.

    ``patches`` is (M, P, d_in); ``captions`` holds M token-id sequences.
    When ``cfg.loss.learn_temperature`` is set a ``log_temperature`` entry is
    added to the parameters.
    """
    patches = np.asarray(patches, dtype=np.float64)
    n = len(patches)
    if n == 0 or len(captions) != n:
        raise ValueError(f"need matching non-empty data, got {n} images and {len(captions)} captions")
    params = {k: np.array(v, dtype=np.float64, copy=True) for k, v in params.items()}
    loss_cfg = cfg.loss
    if loss_cfg.learn_temperature and "log_temperature" not in params:
        params["log_temperature"] = np.array(math.log(loss_cfg.temperature))
    state = AdamState.zeros_like(params)
    ball = model_cfg.ball
    hyper = cfg.hyper
    logs: List[StepLog] = []

    for step, (idx, epoch) in enumerate(batch_indices(n, cfg)):
        tape = T.Tape()
        P = {name: tape.var(val, name) for name, val in params.items()}
        seqs = prune_captions(captions, idx, epoch, cfg)
        rng = np.random.default_rng([cfg.seed, 5, step])
        try:
            E, U = embed(P, patches[idx], seqs, model_cfg, loss_cfg.space)
            tau = T.exp(P["log_temperature"]) if loss_cfg.learn_temperature else None
            loss, chosen = contrastive_loss(E, U, loss_cfg, rng, ball, temperature=tau)
            grads = tape.backward(loss)
        except FloatingPointError as exc:
            raise DivergenceError(step, str(exc)) from exc
        loss_val = float(loss.value)
        gnorm = grads.norm()
        if not (math.isfinite(loss_val) and math.isfinite(gnorm)):
            raise DivergenceError(step, "non-finite loss or gradient")

        if step % cfg.log_interval == 0 or step == cfg.steps - 1:
            img_r, txt_r = embedding_radii(E.value, U.value, loss_cfg.space, model_cfg)
            counts = np.bincount(chosen, minlength=model_cfg.n_queries)
            logs.append(StepLog(
                step=step, lr=learning_rate(step, cfg), loss=loss_val,
                image_radius_mean=float(img_r.mean()), image_radius_std=float(img_r.std()),
                text_radius_mean=float(txt_r.mean()), text_radius_std=float(txt_r.std()),
                grad_norm=gnorm, text_cos_min=min_pairwise_cosine(U.value),
                selected=[int(c) for c in counts],
            ))
        params, state = adamw_step(params, grads, state, hyper, lr=learning_rate(step, cfg))
    return params, logs


def tail(logs: Sequence[StepLog], steps: int, fraction: float = 0.1) -> List[StepLog]:
    """Logs from the last ``fraction`` of a ``steps``-long run."""
    cutoff = steps * (1.0 - fraction)
    return [log for log in logs if log.step >= cutoff]
