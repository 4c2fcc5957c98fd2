"""Points of the probability simplex and the per-interaction primitives.

Simplex vectors are plain 1-d float64 arrays. Functions here validate their
inputs with :func:`as_simplex` and always return fresh arrays.
"""
import math

import numpy as np

from .errors import ParameterError, SimplexError
from .rng import as_generator

SUM_TOL = 1e-9
CLAMP_TOL = 1e-12


def as_simplex(x, copy=True) -> np.ndarray:
    """Validate ``x`` as a point of the simplex.

    Negative weights down to ``-1e-12`` are clamped to zero and the vector is
    renormalized; anything further off the simplex raises SimplexError.
    """
    arr = np.array(x, dtype=np.float64) if copy else np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise SimplexError(f"expected a 1-d vector, got shape {arr.shape}")
    if arr.size < 2:
        raise SimplexError(f"need at least K=2 labels, got K={arr.size}")
    if not np.all(np.isfinite(arr)):
        raise SimplexError("weights must be finite")
    if arr.min() < -CLAMP_TOL:
        raise SimplexError(f"negative weight {arr.min():.3e}")
    total = arr.sum()
    if abs(total - 1.0) > SUM_TOL:
        raise SimplexError(f"weights sum to {total!r}, not 1")
    if arr.min() < 0.0:
        arr = np.where(arr < 0.0, 0.0, arr)
        arr /= arr.sum()
    return arr


def _check_K(K):
    if int(K) != K or K < 2:
        raise SimplexError(f"K must be an integer >= 2, got {K!r}")
    return int(K)


def uniform_vector(K: int) -> np.ndarray:
    K = _check_K(K)
    return np.full(K, 1.0 / K)


def vertex(K: int, k: int) -> np.ndarray:
    K = _check_K(K)
    if not 0 <= k < K:
        raise IndexError(f"label {k} out of range for K={K}")
    e = np.zeros(K)
    e[k] = 1.0
    return e


def sq_norm(x) -> float:
    x = np.asarray(x, dtype=np.float64)
    return float(np.dot(x, x))


def label_from_uniform(x: np.ndarray, u: float) -> int:
    """Inverse-CDF lookup of ``u`` in ``[0, 1)`` against the weights of ``x``.

    Rounding can leave the cumulative sum a hair below 1; draws past it fall
    on the last label with positive weight.
    """
    cdf = np.cumsum(x)
    k = int(np.searchsorted(cdf, u, side="right"))
    if k >= x.size:
        k = int(np.flatnonzero(x > 0)[-1])
    return k


def sample_label(x, rng) -> int:
    """Draw one label from Cat(x) using exactly one uniform."""
    x = as_simplex(x, copy=False)
    return label_from_uniform(x, as_generator(rng).random())


def empirical_message(x, m: int, rng) -> np.ndarray:
    """Mean of ``m`` i.i.d. one-hot draws from Cat(x)."""
    if int(m) != m or m < 1:
        raise ParameterError(f"bandwidth m must be a positive integer, got {m!r}")
    x = as_simplex(x, copy=False)
    gen = as_generator(rng)
    cdf = np.cumsum(x)
    labels = np.searchsorted(cdf, gen.random(int(m)), side="right")
    last = int(np.flatnonzero(x > 0)[-1])
    labels = np.minimum(labels, last)
    return np.bincount(labels, minlength=x.size) / m


def temper(x, T: float) -> np.ndarray:
    """Weights proportional to ``x_k ** (1/T)``; zero weights stay zero.

    Falls back to log-space when the direct powers underflow.
    """
    if not (T > 0) or not math.isfinite(T):
        raise ParameterError(f"temperature must be positive and finite, got {T!r}")
    x = as_simplex(x)
    if T == 1.0:
        return x
    pos = x > 0
    w = np.zeros_like(x)
    w[pos] = x[pos] ** (1.0 / T)
    total = w.sum()
    if not (total > 0) or not math.isfinite(total):
        logw = np.log(x[pos]) / T
        logw -= logw.max()
        w[pos] = np.exp(logw)
        total = w.sum()
    return w / total


def bias_tilt(p: float, h: float) -> float:
    """Exponentially tilt a binary probability: ``p e^h / (p e^h + 1 - p)``."""
    if not 0.0 <= p <= 1.0:
        raise ParameterError(f"p must lie in [0, 1], got {p!r}")
    if p == 0.0 or p == 1.0:
        return float(p)
    # logistic(logit(p) + h) without overflow for large |h|
    z = math.log(p) - math.log1p(-p) + h
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def listener_update(x_L, y, alpha: float) -> np.ndarray:
    """Convex step ``(1 - alpha) x_L + alpha y``."""
    if not 0.0 < alpha <= 1.0:
        raise ParameterError(f"alpha must lie in (0, 1], got {alpha!r}")
    x_L = as_simplex(x_L, copy=False)
    y = as_simplex(y, copy=False)
    if x_L.size != y.size:
        raise SimplexError(f"dimension mismatch: {x_L.size} vs {y.size}")
    if alpha == 1.0:
        return y.copy()
    return (1.0 - alpha) * x_L + alpha * y
