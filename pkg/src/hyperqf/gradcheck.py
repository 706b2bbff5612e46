"""Finite-difference checks for every differentiable operation.

Each case maps one input array to an array output. The output is reduced
to a scalar with fixed random weights, then the tape gradient is compared
with central differences at random interior points.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, List

import numpy as np

from . import tape as T
from .geometry import (BallConfig, clip_features, conformal_factor, expmap, expmap0, mobius_add,
                       pairwise_poincare_dist, poincare_dist, project_to_ball, radius)
from .losses import (LossConfig, align_euclidean, align_hyper_cosine, align_hyper_poincare, align_rqs,
                     contrastive_loss, cosine_dist, infonce_batch, pairwise_cosine_dist)
from .model import ModelConfig, encode_image, encode_texts, init_params, lift_to_ball


@dataclass
class Case:
    name: str
    sample: Callable[[np.random.Generator], np.ndarray]  # input point
    make: Callable[[np.random.Generator], Callable]  # fixed context -> f(x)


def _ball(rng, shape, c=1.0, max_frac=0.7):
    v = rng.standard_normal(shape)
    v /= np.linalg.norm(v, axis=-1, keepdims=True)
    r = rng.uniform(0.05, max_frac, size=shape[:-1] + (1,)) / np.sqrt(c)
    return v * r


def _vec(rng, shape, scale=1.0):
    return scale * rng.standard_normal(shape)


def _model_cases() -> List[Case]:
    mc = ModelConfig(n_queries=3, dim=4, hidden=4, token_dim=3, patch_dim=5)
    vocab = 6
    seqs = [[1, 2], [3], [4, 5, 1]]

    def param_case(name):
        def make(rng):
            params = init_params(mc, vocab, seed=int(rng.integers(1 << 30)))
            for k in params:
                params[k] = params[k] * 5.0  # larger weights make the check non-trivial
            patches = rng.standard_normal((3, 2, mc.patch_dim))

            def f(x):
                p = dict(params)
                p[name] = x
                E = lift_to_ball(encode_image(patches, p), mc.ball, mc.max_norm)
                U = lift_to_ball(encode_texts(seqs, p), mc.ball, mc.max_norm)
                loss, _ = contrastive_loss(E, U, LossConfig(temperature=0.5))
                return loss
            return f

        shape = {"token_emb": (vocab, 3), "text_proj": (3, 4), "patch_proj": (5, 4), "queries": (3, 4),
                 "w_k": (4, 4), "w_v": (4, 4), "out_proj": (4, 4)}[name]
        return Case(f"model[{name}]", lambda rng: rng.uniform(-0.5, 0.5, shape), make)

    cases = [param_case(n) for n in ("token_emb", "text_proj", "patch_proj", "queries", "w_k", "w_v", "out_proj")]

    def enc_image(rng):
        params = init_params(mc, vocab, seed=int(rng.integers(1 << 30)))
        params = {k: 5.0 * v for k, v in params.items()}
        return lambda x: encode_image(x, params)

    def enc_text(rng):
        params = init_params(mc, vocab, seed=int(rng.integers(1 << 30)))
        return lambda x: encode_texts(seqs, {**params, "token_emb": x})

    cases.append(Case("encode_image[patches]", lambda rng: rng.standard_normal((2, mc.patch_dim)), enc_image))
    cases.append(Case("encode_text[token_emb]", lambda rng: rng.standard_normal((vocab, 3)), enc_text))
    cases.append(Case("lift_to_ball", lambda rng: _vec(rng, (3, 4), 0.8),
                      lambda rng: (lambda x: lift_to_ball(x, BallConfig(), 1.0))))
    return cases


def default_cases(c: float = 1.0) -> List[Case]:
    ball = BallConfig(curvature=c)
    d = 4

    def fixed(fn):
        return lambda rng: fn

    def with_point(fn, max_frac=0.7):
        def make(rng):
            other = _ball(rng, (d,), c, max_frac)
            return lambda x: fn(x, other)
        return make

    def with_queries(fn, n=4):
        def make(rng):
            u = _ball(rng, (d,), c)
            return lambda x: fn(x, u)
        return make

    def rqs(rng):
        u = _ball(rng, (d,), c)
        seed = int(rng.integers(1 << 30))
        return lambda x: align_rqs(x, u, 0.5, np.random.default_rng(seed), "poincare", ball)[0]

    def batch_loss(which, cfg):
        def make(rng):
            E = _ball(rng, (3, 2, d), c)
            U = _ball(rng, (3, d), c)
            seed = int(rng.integers(1 << 30))

            def f(x):
                g = np.random.default_rng(seed)
                if which == "images":
                    return infonce_batch(x, U, cfg, g, ball)
                return infonce_batch(E, x, cfg, g, ball)
            return f
        return make

    def batch_sample(which):
        return (lambda rng: _ball(rng, (3, 2, d), c)) if which == "images" else (lambda rng: _ball(rng, (3, d), c))

    cases = [
        Case("conformal_factor", lambda rng: _ball(rng, (d,), c), fixed(lambda x: conformal_factor(x, ball))),
        Case("mobius_add[h]", lambda rng: _ball(rng, (d,), c), with_point(lambda x, w: mobius_add(x, w, ball))),
        Case("mobius_add[w]", lambda rng: _ball(rng, (d,), c), with_point(lambda x, h: mobius_add(h, x, ball))),
        Case("expmap[x]", lambda rng: _ball(rng, (d,), c),
             lambda rng: (lambda v: (lambda x: expmap(x, v, ball)))(_vec(rng, (d,), 0.5))),
        Case("expmap[v]", lambda rng: _vec(rng, (d,), 0.5),
             lambda rng: (lambda x0: (lambda v: expmap(x0, v, ball)))(_ball(rng, (d,), c))),
        Case("expmap0", lambda rng: _vec(rng, (d,)), fixed(lambda v: expmap0(v, ball))),
        Case("poincare_dist", lambda rng: _ball(rng, (d,), c), with_point(lambda x, y: poincare_dist(x, y, ball))),
        Case("pairwise_poincare_dist", lambda rng: _ball(rng, (3, d), c),
             lambda rng: (lambda Y: (lambda X: pairwise_poincare_dist(X, Y, ball)))(_ball(rng, (2, d), c))),
        Case("radius", lambda rng: _ball(rng, (d,), c), fixed(lambda x: radius(x, ball))),
        Case("clip_features", lambda rng: _vec(rng, (3, d)), fixed(lambda v: clip_features(v, 1.0))),
        Case("project_to_ball", lambda rng: _ball(rng, (d,), c), fixed(lambda x: project_to_ball(x, ball))),
        Case("cosine_dist", lambda rng: _vec(rng, (d,)), with_point(cosine_dist)),
        Case("pairwise_cosine_dist", lambda rng: _vec(rng, (3, d)),
             lambda rng: (lambda Y: (lambda X: pairwise_cosine_dist(X, Y)))(_vec(rng, (2, d)))),
        Case("align_euclidean", lambda rng: _vec(rng, (4, d)), with_queries(lambda E, u: align_euclidean(E, u)[0])),
        Case("align_hyper_cosine", lambda rng: _ball(rng, (4, d), c),
             with_queries(lambda E, u: align_hyper_cosine(E, u)[0])),
        Case("align_hyper_poincare", lambda rng: _ball(rng, (4, d), c),
             with_queries(lambda E, u: align_hyper_poincare(E, u, ball)[0])),
        Case("align_rqs", lambda rng: _ball(rng, (4, d), c), rqs),
    ]
    for sim in ("cosine", "poincare"):
        cfg = LossConfig(similarity=sim, temperature=0.5, rqs=True)
        for which in ("images", "texts"):
            cases.append(Case(f"infonce_batch[{sim},{which}]", batch_sample(which), batch_loss(which, cfg)))
    pos = LossConfig(similarity="poincare", mode="positive-only")
    cases.append(Case("positive_only[poincare]", batch_sample("images"),
                      lambda rng: (lambda U: (lambda x: contrastive_loss(x, U, pos, None, ball)[0]))(
                          _ball(rng, (3, d), c))))
    return cases + _model_cases()


def check_case(case: Case, n_points: int = 100, seed: int = 0, step: float = 1e-5) -> float:
    """Largest relative error between tape and finite-difference gradients."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_points):
        x0 = case.sample(rng)
        f = case.make(rng)
        out_shape = np.shape(np.asarray(f(x0)))
        w = rng.standard_normal(out_shape)

        def scalar(x):
            return T.sum(T.mul(f(x), w))

        _, g = T.value_and_grad(scalar, x0)
        g_fd = T.finite_diff_grad(lambda x: float(np.asarray(scalar(x))), x0, step)
        worst = max(worst, T.relative_error(g, g_fd))
    return worst


def run_gradcheck(n_points: int = 100, seed: int = 0, curvature: float = 1.0) -> Dict[str, float]:
    return {case.name: check_case(case, n_points, seed) for case in default_cases(curvature)}
