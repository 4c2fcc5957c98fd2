"""Macroscopic order parameters of a population state.

All functions accept either a :class:`~qsg.dynamics.PopulationState` or a
raw ``(N, K)`` array of agent distributions.
"""
import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError

ENTROPY_EPS = 1e-12


def _agents(state) -> np.ndarray:
    X = getattr(state, "agents", state)
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ParameterError(f"expected an (N, K) array of agents, got shape {X.shape}")
    return X


def mean(state) -> np.ndarray:
    X = _agents(state)
    return X.sum(axis=0) / X.shape[0]


def polarization(state) -> float:
    xbar = mean(state)
    return float(np.dot(xbar, xbar))


def self_overlap(state) -> float:
    X = _agents(state)
    return float(np.einsum("ij,ij->", X, X) / X.shape[0])


def disagreement(state) -> float:
    X = _agents(state)
    dev = X - mean(X)
    return float(np.einsum("ij,ij->", dev, dev))


def coordination(state) -> float:
    """Average overlap of distinct agents, via ``S = U - V / (N (N - 1))``."""
    X = _agents(state)
    N = X.shape[0]
    if N < 2:
        raise ParameterError("coordination needs N >= 2")
    return polarization(X) - disagreement(X) / (N * (N - 1))


def entropy_magnetization(xbar):
    """Normalized entropy ``H`` in [0, 1] and magnetization ``M = (K p - 1)/(K - 1)``."""
    xbar = np.asarray(xbar, dtype=np.float64)
    K = xbar.size
    H = -float(np.dot(xbar, np.log(xbar + ENTROPY_EPS))) / math.log(K)
    H = min(max(H, 0.0), 1.0)
    p = float(xbar.max())
    M = (K * p - 1.0) / (K - 1.0)
    return H, M


def one_vs_rest_maps(U: float, K: int):
    """``(p, M, H)`` for a mean of the form ``(p, (1-p)/(K-1), ...)`` with
    squared norm ``U``."""
    if K < 2:
        raise ParameterError(f"K must be >= 2, got {K}")
    lo = 1.0 / K
    if not (lo - 1e-12 <= U <= 1.0 + 1e-12):
        raise ParameterError(f"U={U!r} outside [1/K, 1]")
    r = max(K * U - 1.0, 0.0)
    p = (1.0 + math.sqrt((K - 1) * r)) / K
    p = min(p, 1.0)
    M = math.sqrt(r / (K - 1))
    rest = 1.0 - p
    H = p * math.log(p) if p > 0 else 0.0
    if rest > 0:
        H += rest * math.log(rest / (K - 1))
    H = -H / math.log(K)
    return p, M, min(max(H, 0.0), 1.0)


@dataclass(frozen=True)
class ObservableRecord:
    mean: np.ndarray
    U: float
    V: float
    q: float
    S: float
    H: float
    M: float
    p_max: float

    @property
    def argmax(self) -> int:
        return int(np.argmax(self.mean))

    @classmethod
    def from_moments(cls, xbar, q: float, N: int) -> "ObservableRecord":
        """Build a record from the mean vector and mean self-overlap alone."""
        xbar = np.asarray(xbar, dtype=np.float64)
        U = float(np.dot(xbar, xbar))
        V = max(N * (q - U), 0.0)
        S = U - V / (N * (N - 1))
        H, M = entropy_magnetization(xbar)
        return cls(xbar, U, V, float(q), S, H, M, float(xbar.max()))

    @classmethod
    def from_probe(cls, xbar) -> "ObservableRecord":
        """Record for a probe-estimated mean; second moments are unknown (NaN)."""
        xbar = np.asarray(xbar, dtype=np.float64)
        H, M = entropy_magnetization(xbar)
        nan = float("nan")
        return cls(xbar, float(np.dot(xbar, xbar)), nan, nan, nan, H, M, float(xbar.max()))


def observe(state) -> ObservableRecord:
    X = _agents(state)
    return ObservableRecord.from_moments(mean(X), self_overlap(X), X.shape[0])
