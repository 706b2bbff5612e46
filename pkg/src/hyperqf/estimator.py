"""scikit-learn style wrapper around model construction, training and evaluation."""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from . import evaluate as ev
from .losses import LossConfig, query_distances
from .model import ModelConfig, embed, init_params, load_checkpoint, save_checkpoint
from .train import TrainConfig, train


def _check_captions(y, n: Optional[int] = None, vocab_size: Optional[int] = None):
    if y is None:
        raise ValueError("captions (y) are required")
    seqs = [list(map(int, s)) for s in y]
    if n is not None and len(seqs) != n:
        raise ValueError(f"got {len(seqs)} captions for {n} images")
    for i, s in enumerate(seqs):
        if not s:
            raise ValueError(f"caption {i} is empty")
        if min(s) < 0 or (vocab_size is not None and max(s) >= vocab_size):
            raise ValueError(f"caption {i} has token ids outside [0, {vocab_size})")
    return seqs


class HyperbolicQFormer(BaseEstimator):
    """Query-based image encoder and bag-of-tokens text encoder trained contrastively.

    ``X`` is an (M, P, d_in) array of image patches and ``y`` a list of M
    token-id captions. ``transform`` returns the (M, N, dim) query
    embeddings; ``predict`` returns, for each image, the index of the best
    caption among ``y`` (or among the training captions when ``y`` is None).
    """

    def __init__(self, n_queries=8, dim=128, hidden=32, token_dim=32, init_scale=0.1, curvature=1.0,
                 max_norm=1.0, eps_boundary=1e-5, space="hyperbolic", similarity="cosine",
                 mode="infonce", rqs=False, rqs_probability=0.5, temperature=0.05, learn_temperature=False,
                 steps=2000, batch_size=64, lr=3e-3, lr_start=3e-5, lr_min=3e-4, warmup_steps=100,
                 weight_decay=0.05, rtp_window=0, log_interval=10, vocab_size=None, random_state=0):
        self.n_queries = n_queries
        self.dim = dim
        self.hidden = hidden
        self.token_dim = token_dim
        self.init_scale = init_scale
        self.curvature = curvature
        self.max_norm = max_norm
        self.eps_boundary = eps_boundary
        self.space = space
        self.similarity = similarity
        self.mode = mode
        self.rqs = rqs
        self.rqs_probability = rqs_probability
        self.temperature = temperature
        self.learn_temperature = learn_temperature
        self.steps = steps
        self.batch_size = batch_size
        self.lr = lr
        self.lr_start = lr_start
        self.lr_min = lr_min
        self.warmup_steps = warmup_steps
        self.weight_decay = weight_decay
        self.rtp_window = rtp_window
        self.log_interval = log_interval
        self.vocab_size = vocab_size
        self.random_state = random_state

    # configs are rebuilt from hyperparameters so set_params always takes effect
    def _model_config(self, patch_dim: int) -> ModelConfig:
        return ModelConfig(n_queries=self.n_queries, dim=self.dim, hidden=self.hidden, token_dim=self.token_dim,
                           patch_dim=patch_dim, init_scale=self.init_scale, curvature=self.curvature,
                           eps_boundary=self.eps_boundary, max_norm=self.max_norm)

    def _loss_config(self) -> LossConfig:
        return LossConfig(space=self.space, similarity=self.similarity, mode=self.mode, rqs=self.rqs,
                          rqs_probability=self.rqs_probability, temperature=self.temperature,
                          learn_temperature=self.learn_temperature)

    def _train_config(self) -> TrainConfig:
        return TrainConfig(steps=self.steps, batch_size=self.batch_size, lr=self.lr, lr_start=self.lr_start,
                           lr_min=self.lr_min, warmup_steps=self.warmup_steps, weight_decay=self.weight_decay,
                           rtp_window=self.rtp_window, log_interval=self.log_interval,
                           seed=int(self.random_state), loss=self._loss_config())

    def _validate_X(self, X, reset: bool):
        X = check_array(X, allow_nd=True, dtype=np.float64, ensure_min_samples=1)
        if X.ndim != 3:
            raise ValueError(f"X must be 3-D (samples, patches, features), got shape {X.shape}")
        if reset:
            self.n_features_in_ = X.shape[2]
        elif X.shape[2] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[2]} features per patch, estimator was fitted with {self.n_features_in_}")
        return X

    def fit(self, X, y):
        X = self._validate_X(X, reset=True)
        seqs = _check_captions(y, len(X), self.vocab_size)
        vocab = self.vocab_size if self.vocab_size is not None else max(max(s) for s in seqs) + 1
        mcfg = self._model_config(X.shape[2])
        tcfg = self._train_config()
        params = init_params(mcfg, vocab, seed=int(self.random_state))
        self.params_, self.logs_ = train(X, seqs, params, tcfg, mcfg)
        self.model_config_ = mcfg
        self.vocab_size_ = vocab
        self.train_captions_ = seqs
        return self

    def _captions(self, y):
        if y is None:
            if self.train_captions_ is None:
                raise ValueError("captions are required for an estimator restored from a checkpoint")
            return self.train_captions_
        return _check_captions(y, None, self.vocab_size_)

    def transform(self, X):
        """Query embeddings (M, N, dim) in the configured space."""
        check_is_fitted(self, "params_")
        X = self._validate_X(X, reset=False)
        E, _ = embed(self.params_, X, [[0]], self.model_config_, self.space)
        return E

    def transform_text(self, y):
        """Caption embeddings (M, dim)."""
        check_is_fitted(self, "params_")
        _, U = embed(self.params_, np.zeros((1, 1, self.n_features_in_)), self._captions(y),
                     self.model_config_, self.space)
        return U

    def decision_function(self, X, y=None):
        """Score matrix: ``-min_j dist(e_ij, u_t)``."""
        E = self.transform(X)
        U = self.transform_text(y)
        return -query_distances(E, U, self.similarity, self.model_config_.ball).min(axis=1)

    def predict(self, X, y=None):
        return np.argmax(self.decision_function(X, y), axis=1)

    def score(self, X, y):
        """TR@1 as a fraction: image ``i`` is correct when caption ``i`` ranks first."""
        return self.retrieval_report(X, y).tr[1] / 100.0

    def retrieval_report(self, X, y, ks: Sequence[int] = ev.KS) -> ev.RetrievalReport:
        return ev.retrieval_from_scores(self.decision_function(X, y), ks)

    def selection_histogram(self, X, y) -> ev.SelectionHistogram:
        check_is_fitted(self, "params_")
        X = self._validate_X(X, reset=False)
        return ev.selection_histogram(self.params_, X, self._captions(y), self.model_config_,
                                      self.similarity, self.space)

    def radius_report(self, X, y, leaves, depths) -> ev.RadiusReport:
        check_is_fitted(self, "params_")
        X = self._validate_X(X, reset=False)
        return ev.radius_report(self.params_, X, self._captions(y), leaves, depths, self.model_config_, self.space)

    def save(self, path) -> None:
        check_is_fitted(self, "params_")
        save_checkpoint(path, self.params_, {"estimator": self.get_params(), "n_features_in": self.n_features_in_,
                                             "vocab_size": self.vocab_size_})

    @classmethod
    def load(cls, path) -> "HyperbolicQFormer":
        params, header = load_checkpoint(path)
        if "estimator" not in header:
            raise ValueError(f"{path}: checkpoint was not written by {cls.__name__}.save")
        est = cls(**header["estimator"])
        est.params_ = params
        est.n_features_in_ = int(header["n_features_in"])
        est.vocab_size_ = int(header["vocab_size"])
        est.model_config_ = est._model_config(est.n_features_in_)
        est.train_captions_ = None
        est.logs_ = []
        return est
