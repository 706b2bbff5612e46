"""Small query-transformer analog: cross-attention image queries and a bag-of-tokens text encoder.

Parameters live in a plain ``dict`` of arrays. Passing a dict of recorded
:class:`~hyperqf.tape.TapeNode` objects instead makes every forward pass
differentiable.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass
from typing import Dict, Optional, Sequence

import numpy as np

from . import tape as T
from .geometry import BallConfig, clip_features, expmap0

PARAM_NAMES = ("token_emb", "text_proj", "patch_proj", "queries", "w_k", "w_v", "out_proj")


@dataclass(frozen=True)
class ModelConfig:
    n_queries: int = 8
    dim: int = 128
    hidden: int = 32
    token_dim: int = 32
    patch_dim: int = 32
    init_scale: float = 0.1
    curvature: float = 1.0
    eps_boundary: float = 1e-5
    max_norm: float = 1.0

    def __post_init__(self):
        for name in ("n_queries", "dim", "hidden", "token_dim", "patch_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not self.init_scale > 0:
            raise ValueError("init_scale must be > 0")
        if not self.max_norm > 0:
            raise ValueError("max_norm must be > 0")
        BallConfig(self.curvature, None, self.eps_boundary)

    @property
    def ball(self) -> BallConfig:
        return BallConfig(curvature=self.curvature, eps_boundary=self.eps_boundary)


def param_shapes(cfg: ModelConfig, vocab_size: int) -> Dict[str, tuple]:
    return {
        "token_emb": (vocab_size, cfg.token_dim),
        "text_proj": (cfg.token_dim, cfg.dim),
        "patch_proj": (cfg.patch_dim, cfg.hidden),
        "queries": (cfg.n_queries, cfg.hidden),
        "w_k": (cfg.hidden, cfg.hidden),
        "w_v": (cfg.hidden, cfg.hidden),
        "out_proj": (cfg.hidden, cfg.dim),
    }


def init_params(cfg: ModelConfig, vocab_size: int, seed: int = 0) -> Dict[str, np.ndarray]:
    """Uniform(-init_scale, init_scale) entries, one seeded stream per tensor."""
    params = {}
    for k, (name, shape) in enumerate(param_shapes(cfg, vocab_size).items()):
        rng = np.random.default_rng([seed, 2, k])
        params[name] = rng.uniform(-cfg.init_scale, cfg.init_scale, size=shape)
    return params


def attention_weights(patches, params):
    """Softmax over patches of ``q_j . (W_k h_p) / sqrt(d_h)``; shape (..., N, P)."""
    h = T.matmul(patches, params["patch_proj"])
    keys = T.matmul(h, params["w_k"])
    d_h = np.shape(T._val(params["queries"]))[-1]
    logits = T.matmul(params["queries"], T.swapaxes(keys, -1, -2)) / math.sqrt(d_h)
    return T.softmax(logits, axis=-1), h


def encode_image(patches, params):
    """Query embeddings (N, d) for patches (P, d_in); batched input (B, P, d_in) gives (B, N, d)."""
    p = np.shape(T._val(patches))
    d_in = np.shape(T._val(params["patch_proj"]))[0]
    if len(p) not in (2, 3) or p[-1] != d_in or p[-2] < 1:
        raise T.ShapeError(f"patches must be (P, {d_in}) or (B, P, {d_in}), got {p}")
    attn, h = attention_weights(patches, params)
    values = T.matmul(h, params["w_v"])
    return T.matmul(T.matmul(attn, values), params["out_proj"])


def _mean_matrix(seqs: Sequence[Sequence[int]], vocab_size: int) -> np.ndarray:
    m = np.zeros((len(seqs), vocab_size))
    for i, seq in enumerate(seqs):
        if len(seq) == 0:
            raise ValueError(f"caption {i} is empty")
        np.add.at(m[i], np.asarray(seq, dtype=np.int64), 1.0 / len(seq))
    return m


def encode_texts(seqs: Sequence[Sequence[int]], params):
    """(B, d) caption vectors: projected mean of token embeddings."""
    vocab_size = np.shape(T._val(params["token_emb"]))[0]
    pooled = T.matmul(_mean_matrix(seqs, vocab_size), params["token_emb"])
    return T.matmul(pooled, params["text_proj"])


def encode_text(tokens: Sequence[int], params):
    """Caption vector (d,) for a single token sequence."""
    if len(tokens) == 0:
        raise ValueError("cannot encode an empty caption")
    return encode_texts([tokens], params)[0]


def lift_to_ball(outputs, ball: BallConfig, max_norm: float = 1.0):
    """Clip Euclidean outputs to ``max_norm`` and map them into the ball at the origin."""
    return expmap0(clip_features(outputs, max_norm), ball)


def embed(params, patches, seqs, cfg: ModelConfig, space: str):
    """Image queries (B, N, d) and caption vectors (B, d) in the chosen space."""
    E = encode_image(patches, params)
    U = encode_texts(seqs, params)
    if space == "hyperbolic":
        ball = cfg.ball
        E = lift_to_ball(E, ball, cfg.max_norm)
        U = lift_to_ball(U, ball, cfg.max_norm)
    return E, U


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(path, params: Dict[str, np.ndarray], header: Optional[dict] = None) -> None:
    """One JSON document: ``{"header": ..., "params": {name: {"shape", "data"}}}``.

    Floats are written with ``repr`` precision, so loading is bit-exact.
    """
    doc = {
        "header": header or {},
        "params": {
            name: {"shape": list(np.shape(arr)), "data": np.asarray(arr, dtype=np.float64).ravel().tolist()}
            for name, arr in params.items()
        },
    }
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def load_checkpoint(path):
    """Return ``(params, header)``."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict) or "params" not in doc:
        raise ValueError(f"{path}: not a checkpoint document")
    params = {}
    for name, entry in doc["params"].items():
        arr = np.asarray(entry["data"], dtype=np.float64)
        params[name] = arr.reshape(entry["shape"])
    return params, doc.get("header", {})


def config_dict(cfg: ModelConfig) -> dict:
    return asdict(cfg)
