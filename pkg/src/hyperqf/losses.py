"""Min-over-queries alignment losses and the in-batch contrastive objective.

An image is represented by ``N`` query embeddings and a caption by one
vector. The alignment distance between them is the smallest distance from
the caption to any of the queries; Random Query Selection (RQS) replaces
that minimum, with probability ``1 - p``, by the distance to a uniformly
drawn query.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np

from . import tape as T
from .geometry import DEFAULT_BALL, BallConfig, pairwise_poincare_dist, poincare_dist

SPACES = ("euclidean", "hyperbolic")
SIMILARITIES = ("cosine", "poincare")
MODES = ("infonce", "positive-only")


@dataclass(frozen=True)
class LossConfig:
    space: str = "hyperbolic"
    similarity: str = "cosine"
    mode: str = "infonce"
    rqs: bool = False
    rqs_probability: float = 0.5
    temperature: float = 0.05
    learn_temperature: bool = False

    def __post_init__(self):
        if self.space not in SPACES:
            raise ValueError(f"space must be one of {SPACES}, got {self.space!r}")
        if self.similarity not in SIMILARITIES:
            raise ValueError(f"similarity must be one of {SIMILARITIES}, got {self.similarity!r}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.similarity == "poincare" and self.space != "hyperbolic":
            raise ValueError("similarity='poincare' requires space='hyperbolic'")
        if not 0.0 <= self.rqs_probability <= 1.0:
            raise ValueError(f"rqs_probability must be in [0, 1], got {self.rqs_probability}")
        if not self.temperature > 0:
            raise ValueError(f"temperature must be > 0, got {self.temperature}")

    @property
    def selection_probability(self) -> float:
        """Probability of keeping the argmin query for the positive pair."""
        return self.rqs_probability if self.rqs else 1.0


def _unit(x, eps: float = 1e-15):
    return x / T.maximum(T.norm(x, keepdims=True), eps)


def cosine_dist(a, b):
    """``1 - <a, b> / (|a| |b|)`` along the last axis."""
    na, nb = T.norm(a), T.norm(b)
    if np.any(T._val(na) == 0) or np.any(T._val(nb) == 0):
        raise ValueError("cosine distance is undefined for zero vectors")
    return 1.0 - T.dot(a, b) / (na * nb)


def pairwise_cosine_dist(x, y):
    """Cosine distances between rows of ``x`` (n, d) and rows of ``y`` (m, d)."""
    return 1.0 - T.matmul(_unit(x), T.swapaxes(_unit(y), -1, -2))


def _check_queries(E):
    shape = np.shape(T._val(E))
    if len(shape) != 2 or shape[0] == 0:
        raise ValueError(f"query set must be a non-empty (N, d) matrix, got shape {shape}")


def _select(dists, j: int):
    return dists[j], j


def align_euclidean(E, u) -> Tuple[object, int]:
    """``min_j d_cos(e_j, u)`` and the minimising query index (lowest on ties)."""
    _check_queries(E)
    dists = cosine_dist(E, u)
    return _select(dists, int(np.argmin(T._val(dists))))


def align_hyper_cosine(E_h, u_h) -> Tuple[object, int]:
    """Cosine alignment of ball-resident embeddings; radii do not matter."""
    return align_euclidean(E_h, u_h)


def align_hyper_poincare(E_h, u_h, ball: BallConfig = DEFAULT_BALL) -> Tuple[object, int]:
    """``min_j d_Poin(e_j, u)`` and the minimising query index."""
    _check_queries(E_h)
    dists = poincare_dist(E_h, u_h, ball)
    return _select(dists, int(np.argmin(T._val(dists))))


def rqs_select(argmin, n_queries: int, p: float, rng: np.random.Generator):
    """Apply Random Query Selection to argmin indices.

    Each entry keeps its argmin with probability ``p`` and is otherwise
    replaced by a uniform draw from ``{0, ..., n_queries - 1}``. Two numbers
    are drawn per entry regardless of the outcome, so stream consumption does
    not depend on the data.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must be in [0, 1], got {p}")
    argmin = np.asarray(argmin)
    keep = rng.random(argmin.shape) < p
    alt = rng.integers(0, n_queries, size=argmin.shape)
    return np.where(keep, argmin, alt)


def align_rqs(E, u, p: float, rng: np.random.Generator, similarity: str = "cosine",
              ball: BallConfig = DEFAULT_BALL) -> Tuple[object, int]:
    """Alignment loss with Random Query Selection."""
    _check_queries(E)
    if similarity == "cosine":
        dists = cosine_dist(E, u)
    elif similarity == "poincare":
        dists = poincare_dist(E, u, ball)
    else:
        raise ValueError(f"unknown similarity {similarity!r}")
    j = int(rqs_select(int(np.argmin(T._val(dists))), np.shape(T._val(E))[0], p, rng))
    return _select(dists, j)


def query_distances(E, U, similarity: str, ball: BallConfig = DEFAULT_BALL):
    """Distances from every query of every image to every caption.

    ``E`` is (B, N, d), ``U`` is (M, d); the result is (B, N, M).
    """
    B, N, d = np.shape(T._val(E))
    flat = T.reshape(E, (B * N, d))
    if similarity == "cosine":
        D = pairwise_cosine_dist(flat, U)
    elif similarity == "poincare":
        D = pairwise_poincare_dist(flat, U, ball)
    else:
        raise ValueError(f"unknown similarity {similarity!r}")
    return T.reshape(D, (B, N, np.shape(T._val(U))[0]))


def contrastive_loss(E, U, cfg: LossConfig, rng: Optional[np.random.Generator] = None,
                     ball: BallConfig = DEFAULT_BALL, temperature=None):
    """Batch loss plus the query index chosen for each positive pair.

    ``E`` is (B, N, d) image queries, ``U`` is (B, d) captions; row ``i`` of
    each forms a positive pair. ``temperature`` overrides ``cfg.temperature``
    and may be a recorded node (learned temperature).
    """
    B, N, _ = np.shape(T._val(E))
    if np.shape(T._val(U))[0] != B:
        raise ValueError(f"batch mismatch: {B} images vs {np.shape(T._val(U))[0]} captions")
    if B == 0:
        raise ValueError("empty batch")
    D = query_distances(E, U, cfg.similarity, ball)
    sel = np.argmin(T._val(D), axis=1)  # (B, B); np.argmin keeps the lowest index on ties
    diag = np.arange(B)
    p = cfg.selection_probability
    if p < 1.0:
        if rng is None:
            raise ValueError("RQS needs a random generator")
        sel[diag, diag] = rqs_select(sel[diag, diag], N, p, rng)
    chosen = sel[diag, diag].copy()

    if cfg.mode == "positive-only":
        pos = D[diag, chosen, diag]
        return T.mean(pos), chosen

    Dsel = D[diag[:, None], sel, diag[None, :]]  # (B, B)
    tau = cfg.temperature if temperature is None else temperature
    S = -Dsel / tau
    i2t = T.log_softmax(S, axis=1)[diag, diag]
    t2i = T.log_softmax(S, axis=0)[diag, diag]
    loss = -0.5 * (T.mean(i2t) + T.mean(t2i))
    return loss, chosen


def infonce_batch(images, texts, cfg: LossConfig, rng: Optional[np.random.Generator] = None,
                  ball: BallConfig = DEFAULT_BALL):
    """Symmetric InfoNCE over the B x B min-over-queries score matrix.

    ``images`` is a sequence of (N, d) query sets (or one (B, N, d) array) and
    ``texts`` a sequence of d-vectors. Scores are ``-dist / temperature``.
    """
    if isinstance(images, (list, tuple)):
        if len(images) != len(texts):
            raise ValueError(f"length mismatch: {len(images)} images vs {len(texts)} texts")
        if len(images) == 0:
            raise ValueError("empty batch")
        if any(isinstance(e, T.TapeNode) for e in images):
            images = T.concat([T.reshape(e, (1,) + np.shape(T._val(e))) for e in images], axis=0)
        else:
            images = np.stack([np.asarray(e, dtype=np.float64) for e in images])
    if isinstance(texts, (list, tuple)):
        if any(isinstance(t, T.TapeNode) for t in texts):
            texts = T.concat([T.reshape(t, (1, -1)) for t in texts], axis=0)
        else:
            texts = np.stack([np.asarray(t, dtype=np.float64) for t in texts])
    if cfg.mode != "infonce":
        cfg = replace(cfg, mode="infonce")
    loss, _ = contrastive_loss(images, texts, cfg, rng, ball)
    return loss
