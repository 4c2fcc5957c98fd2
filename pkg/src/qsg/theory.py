"""Closed-form predictions for the quantized gossip process.

Time is measured in interaction steps throughout; the ``*_rounds`` helpers
convert to population rounds (steps / N).
"""
import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError

NEUTRAL_GAMMA = 1e-8


def _check_alpha(alpha):
    if not 0.0 < alpha <= 1.0:
        raise ParameterError(f"alpha must lie in (0, 1], got {alpha!r}")


def _check_N(N):
    if N < 2:
        raise ParameterError(f"N must be >= 2, got {N!r}")


def _check_m(m):
    if not m >= 1:
        raise ParameterError(f"m must be >= 1, got {m!r}")


@dataclass(frozen=True)
class DriftPrediction:
    soft_term: float
    injection_term: float

    @property
    def total(self) -> float:
        return self.soft_term + self.injection_term


@dataclass(frozen=True)
class CrossoverParams:
    gamma_h: float
    gamma_T: float
    N_c: float  # math.inf when h == 0


def soft_U_drift(V, N, alpha):
    _check_N(N)
    return 2.0 * alpha**2 * V / (N**2 * (N - 1))


def injection_U_drift(q, N, m, alpha):
    """Extra expected dU per step from quantization; zero for Soft (m = inf)."""
    _check_N(N)
    _check_m(m)
    if math.isinf(m):
        return 0.0
    return alpha**2 / (m * N**2) * (1.0 - q)


def total_U_drift(U, V, N, K, m, alpha) -> DriftPrediction:
    _check_N(N)
    if V < -1e-12:
        raise ParameterError(f"V must be >= 0, got {V!r}")
    q = U + V / N
    if not (1.0 / K - 1e-9 <= U <= 1.0 + 1e-9) or q > 1.0 + 1e-9:
        raise ParameterError(f"inconsistent moments U={U!r}, V={V!r} (q={q!r}) for K={K}, N={N}")
    return DriftPrediction(soft_U_drift(V, N, alpha), injection_U_drift(q, N, m, alpha))


def soft_V_contraction(V, N, alpha):
    _check_N(N)
    return -(2.0 * alpha / (N - 1)) * (1.0 - alpha + alpha / N) * V


def topm_V_drift(U, V, N, m, alpha):
    inj = 0.0
    if not math.isinf(m):
        _check_m(m)
        inj = alpha**2 * (N - 1) / (m * N) * (1.0 - U - V / N)
    return soft_V_contraction(V, N, alpha) + inj


def S_drift(V, N, alpha):
    _check_N(N)
    return 2.0 * alpha * V / (N * (N - 1) ** 2)


def meanfield_U(t, N, K, m, alpha):
    """Mean-field polarization after ``t`` steps from the symmetric state.
    Accepts scalar or array ``t``."""
    rate = alpha**2 / (m * N**2)
    res = 1.0 - (1.0 - 1.0 / K) * np.exp(-rate * np.asarray(t, dtype=np.float64))
    return float(res) if np.ndim(res) == 0 else res


def meanfield_U_rounds(tau, N, K, m, alpha):
    return meanfield_U(np.asarray(tau) * N, N, K, m, alpha)


def consensus_time(U_star, K, N, m, alpha):
    """Mean-field steps to reach polarization ``U_star``."""
    if not 1.0 / K < U_star < 1.0:
        raise ParameterError(f"U_star must lie in (1/K, 1), got {U_star!r}")
    return m * N**2 / alpha**2 * math.log((1.0 - 1.0 / K) / (1.0 - U_star))


def consensus_time_rounds(U_star, K, N, m, alpha):
    return consensus_time(U_star, K, N, m, alpha) / N


def crossover(N, m, alpha, h=0.0, T=1.0) -> CrossoverParams:
    _check_alpha(alpha)
    _check_m(m)
    if not T > 0:
        raise ParameterError(f"T must be positive, got {T!r}")
    scale = m * N / alpha
    N_c = math.inf if h == 0 else alpha / (m * abs(h))
    return CrossoverParams(scale * h, scale * abs(1.0 / T - 1.0), N_c)


def fixation_probability(p0, gamma_h):
    """Probability that label 0 fixes from initial mean ``p0`` under the
    weak-bias diffusion; ``p0`` itself in the neutral limit."""
    if not 0.0 <= p0 <= 1.0:
        raise ParameterError(f"p0 must lie in [0, 1], got {p0!r}")
    if p0 == 0.0 or p0 == 1.0:
        return float(p0)
    g = gamma_h
    if abs(g) < NEUTRAL_GAMMA:
        # first-order expansion around the neutral point
        return p0 + g * p0 * (1.0 - p0)
    if g < 0:
        # mirror image keeps the exponentials bounded
        return 1.0 - fixation_probability(1.0 - p0, -g)
    # (1 - e^{-2 g p0}) / (1 - e^{-2 g})
    return math.expm1(-2.0 * g * p0) / math.expm1(-2.0 * g)


def logistic_fixation(gamma_h):
    """Fixation from ``p0 = 1/2``: ``1 / (1 + exp(-gamma_h))``."""
    if gamma_h >= 0:
        return 1.0 / (1.0 + math.exp(-gamma_h))
    e = math.exp(gamma_h)
    return e / (1.0 + e)


def expected_final_magnetization(gamma_h):
    return 2.0 * fixation_probability(0.5, gamma_h) - 1.0


def tempered_linear_rate(alpha, T):
    """Per-round growth rate of a small mean asymmetry under tempering."""
    if not T > 0:
        raise ParameterError(f"T must be positive, got {T!r}")
    return alpha * (1.0 / T - 1.0)


def theory_curve(t_grid, N, K, m, alpha):
    """Rows of ``(t, tau, U)`` for overlay plots."""
    t = np.asarray(t_grid, dtype=np.float64)
    return np.column_stack([t, t / N, meanfield_U(t, N, K, m, alpha)])
