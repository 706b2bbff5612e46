"""Poincaré-ball operations with boundary safeguards.

Points and tangent vectors are plain arrays whose last axis holds the
coordinates; leading axes are batch axes. All functions are built from
:mod:`hyperqf.tape` primitives, so they accept recorded
:class:`~hyperqf.tape.TapeNode` operands as well and are differentiable.

The ball is ``{x : c * ||x||^2 < 1}``. Every operation that can produce a
point re-projects it to ``c * ||x||^2 <= (1 - eps_boundary)^2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import tape as T


@dataclass(frozen=True)
class BallConfig:
    """Curvature and numerical margins of the Poincaré ball.

    ``dim`` is optional; when set, functions reject points of another width.
    """

    curvature: float = 1.0
    dim: Optional[int] = None
    eps_boundary: float = 1e-5
    eps_div: float = 1e-15

    def __post_init__(self):
        if not self.curvature > 0:
            raise ValueError(f"curvature must be > 0, got {self.curvature}")
        if self.dim is not None and self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        if not 0 < self.eps_boundary <= 1e-3:
            raise ValueError(f"eps_boundary must be in (0, 1e-3], got {self.eps_boundary}")
        if not self.eps_div > 0:
            raise ValueError("eps_div must be > 0")

    @property
    def sqrt_c(self) -> float:
        return math.sqrt(self.curvature)

    @property
    def max_norm(self) -> float:
        """Largest Euclidean norm a point may have after projection."""
        return (1.0 - self.eps_boundary) / self.sqrt_c


DEFAULT_BALL = BallConfig()


def _check(x, ball: BallConfig):
    v = T._val(x)
    if ball.dim is not None and np.shape(v)[-1] != ball.dim:
        raise T.ShapeError(f"expected last axis of size {ball.dim}, got {np.shape(v)}")


def _sqnorm(x):
    return T.dot(x, x, keepdims=True)


def conformal_factor(x, ball: BallConfig = DEFAULT_BALL):
    """``2 / (1 - c ||x||^2)``, shape of ``x`` minus the last axis."""
    _check(x, ball)
    lam = 2.0 / (1.0 - ball.curvature * _sqnorm(x))
    return T.reshape(lam, np.shape(T._val(lam))[:-1])


def project_to_ball(x, ball: BallConfig = DEFAULT_BALL):
    """Radially rescale points that drifted past the boundary margin.

    Points already inside the margin are returned unchanged (bit for bit).
    """
    v = T._val(x)
    if not np.all(np.isfinite(v)):
        raise ValueError("project_to_ball: non-finite input")
    _check(x, ball)
    bound = ball.max_norm
    n = T.norm(x, keepdims=True)
    if isinstance(x, T.TapeNode) or np.any(T._val(n) > bound):
        return x * (bound / T.maximum(n, bound))
    return np.asarray(v, dtype=np.float64)


def mobius_add(h, w, ball: BallConfig = DEFAULT_BALL):
    """Möbius addition ``h (+)_c w``."""
    _check(h, ball)
    _check(w, ball)
    c = ball.curvature
    hw = T.dot(h, w, keepdims=True)
    h2 = _sqnorm(h)
    w2 = _sqnorm(w)
    num = (1.0 + 2.0 * c * hw + c * w2) * h + (1.0 - c * h2) * w
    den = 1.0 + 2.0 * c * hw + (c * c) * h2 * w2
    return project_to_ball(num / T.maximum(den, ball.eps_div), ball)


def expmap0(v, ball: BallConfig = DEFAULT_BALL):
    """Exponential map at the origin: ``tanh(sqrt(c)|v|) v / (sqrt(c)|v|)``."""
    _check(v, ball)
    sc = ball.sqrt_c
    n = T.maximum(T.norm(v, keepdims=True), ball.eps_div)
    return project_to_ball(v * (T.tanh(sc * n) / (sc * n)), ball)


def expmap(x, v, ball: BallConfig = DEFAULT_BALL):
    """Exponential map at ``x`` applied to tangent vector ``v``.

    As ``|v| -> 0`` the result tends to ``x``; for ``|v| < eps_div`` the
    norm is floored, which returns ``x`` exactly when ``v == 0``.
    """
    _check(x, ball)
    _check(v, ball)
    sc = ball.sqrt_c
    n = T.maximum(T.norm(v, keepdims=True), ball.eps_div)
    lam = 2.0 / (1.0 - ball.curvature * _sqnorm(x))
    second = v * (T.tanh(sc * lam * n / 2.0) / (sc * n))
    return mobius_add(x, second, ball)


def poincare_dist(x, y, ball: BallConfig = DEFAULT_BALL):
    """Geodesic distance ``(2/sqrt(c)) atanh(sqrt(c) |(-x) (+)_c y|)``.

    Broadcasts over leading axes; the last axis is reduced.
    """
    sc = ball.sqrt_c
    m = mobius_add(-x, y, ball)
    return (2.0 / sc) * T.atanh(sc * T.norm(m), eps=ball.eps_boundary)


def pairwise_poincare_dist(x, y, ball: BallConfig = DEFAULT_BALL):
    """All distances between rows of ``x`` (n, d) and rows of ``y`` (m, d).

    Same quantity as :func:`poincare_dist`, but ``|(-x) (+)_c y|`` is expanded
    in terms of the Gram entries ``<x, y>``, ``|x|^2`` and ``|y|^2`` so the
    n-by-m table costs one matrix product instead of n*m Möbius sums.
    """
    _check(x, ball)
    _check(y, ball)
    c, sc = ball.curvature, ball.sqrt_c
    xy = T.matmul(x, T.swapaxes(y, -1, -2))  # (n, m)
    x2 = _sqnorm(x)  # (n, 1)
    y2 = T.swapaxes(_sqnorm(y), -1, -2)  # (1, m)
    # a = -x, b = y in the Möbius formula
    alpha = 1.0 - 2.0 * c * xy + c * y2
    beta = 1.0 - c * x2
    num2 = alpha * alpha * x2 - 2.0 * alpha * beta * xy + beta * beta * y2
    den = 1.0 - 2.0 * c * xy + (c * c) * x2 * y2
    mnorm = T.sqrt(T.maximum(num2, 1e-24)) / T.maximum(den, ball.eps_div)
    return (2.0 / sc) * T.atanh(sc * mnorm, eps=ball.eps_boundary)


def radius(h, ball: BallConfig = DEFAULT_BALL):
    """Hyperbolic radius, i.e. the distance from the origin."""
    _check(h, ball)
    sc = ball.sqrt_c
    return (2.0 / sc) * T.atanh(sc * T.norm(h), eps=ball.eps_boundary)


def clip_features(v, max_norm: float = 1.0):
    """Rescale vectors whose norm exceeds ``max_norm`` onto that sphere."""
    if not max_norm > 0:
        raise ValueError("max_norm must be positive")
    n = T.norm(v, keepdims=True)
    if not isinstance(v, T.TapeNode) and not np.any(n > max_norm):
        return np.asarray(v, dtype=np.float64)
    return v * (max_norm / T.maximum(n, max_norm))


def in_ball(x, ball: BallConfig = DEFAULT_BALL) -> bool:
    """True if every point satisfies ``c |x|^2 <= (1 - eps_boundary)^2``."""
    v = np.asarray(T._val(x), dtype=np.float64)
    lim = (1.0 - ball.eps_boundary) ** 2
    return bool(np.all(ball.curvature * np.sum(v * v, axis=-1) <= lim * (1 + 1e-12)))
