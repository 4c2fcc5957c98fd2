"""Monte Carlo measurements that connect simulated runs to the closed forms
in :mod:`qsg.theory`."""
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize, stats

from . import kernels
from .channels import ChannelSpec, source_distribution
from .dynamics import EnsembleResult, Trajectory, _Streams, evolve
from .errors import ParameterError
from .observables import self_overlap
from .rng import DRIFT, MESSAGE, PAIR, RandomSource
from .theory import injection_U_drift, meanfield_U

BATCH = 1 << 17
_OBS_COLUMN = {"U": 0, "V": 1, "S": 2}


@dataclass(frozen=True)
class EstimateWithError:
    value: float
    std_error: float
    n: int

    def pull(self, expected: float) -> float:
        """(value - expected) / std_error; 0 when both the error and the
        difference vanish to rounding."""
        diff = self.value - expected
        if self.std_error > 0:
            return diff / self.std_error
        return 0.0 if abs(diff) <= 1e-15 * max(1.0, abs(expected)) else math.copysign(math.inf, diff)

    def within(self, expected: float, nsigma: float = 3.0, atol: float = 0.0) -> bool:
        return abs(self.value - expected) <= nsigma * self.std_error + atol


# below this many expected minority-label emissions per estimate the sample
# standard error misses the rare compensating jumps
MIN_MINORITY_EMISSIONS = 10.0


@dataclass(frozen=True)
class ExcessDrift:
    estimate: EstimateWithError
    predicted: float
    q: float
    expected_minority: float = math.inf

    @property
    def reliable(self) -> bool:
        """Whether the standard error can be trusted: near a vertex the
        excess comes from rare off-label messages the sample never sees."""
        return self.expected_minority >= MIN_MINORITY_EMISSIONS


@dataclass(frozen=True)
class FixationEstimate(EstimateWithError):
    wilson_low: float = 0.0
    wilson_high: float = 1.0
    undecided: int = 0


@dataclass(frozen=True)
class ScalingFit:
    slope: float
    intercept: float
    r_squared: float
    points: Tuple[Tuple[float, float], ...] = field(default=())


def mean_and_sem(samples) -> EstimateWithError:
    samples = np.asarray(samples, dtype=np.float64)
    n = samples.size
    if n < 1:
        raise ParameterError("need at least one sample")
    mu = math.fsum(samples) / n
    if n == 1:
        return EstimateWithError(mu, 0.0, 1)
    resid = samples - mu
    var = math.fsum(resid * resid) / (n - 1)
    return EstimateWithError(mu, math.sqrt(var / n), n)


def _agents(state):
    return np.ascontiguousarray(getattr(state, "agents", state), dtype=np.float64)


def _sources(X, channel: ChannelSpec):
    if channel.h == 0.0 and channel.T == 1.0:
        return X
    return np.vstack([source_distribution(x, channel) for x in X])


def one_step_samples(state, channel: ChannelSpec, alpha: float, samples: int,
                     source: RandomSource) -> np.ndarray:
    """Per-sample (dU, dV, dS) for the channel and for the paired Soft message,
    all launched from the same snapshot. Shape ``(samples, 6)``."""
    if samples < 1:
        raise ParameterError(f"samples must be >= 1, got {samples}")
    X = _agents(state)
    src = np.ascontiguousarray(_sources(X, channel))
    m = int(channel.bandwidth) if channel.quantized else 0
    streams = _Streams(source, m)
    out = []
    done = 0
    while done < samples:
        n = min(BATCH, samples - done)
        pair_u, msg_u = streams.draw(n)
        out.append(kernels.drift_samples(X, src, pair_u, msg_u, alpha, channel.quantized))
        done += n
    return np.concatenate(out)


def one_step_drift(state, channel: ChannelSpec, alpha: float, samples: int,
                   source: RandomSource, observable: str = "U") -> EstimateWithError:
    """Mean and standard error of the one-step change of ``observable``
    (U, V or S) over independent steps from one snapshot."""
    col = _OBS_COLUMN[observable]
    return mean_and_sem(one_step_samples(state, channel, alpha, samples, source)[:, col])


def excess_drift(state, channel: ChannelSpec, alpha: float, samples: int,
                 source: RandomSource, paired: bool = True) -> ExcessDrift:
    """Quantized minus Soft one-step dU from the same snapshot.

    ``paired`` reuses each sampled pair for both messages; otherwise the Soft
    baseline gets its own independent pairs.
    """
    if not channel.quantized:
        raise ParameterError("excess drift is undefined for the Soft channel")
    X = _agents(state)
    N = X.shape[0]
    q = self_overlap(X)
    predicted = injection_U_drift(q, N, channel.bandwidth, alpha)
    src = _sources(X, channel)
    minority = samples * channel.bandwidth * float(np.mean(1.0 - src.max(axis=1)))
    if paired:
        out = one_step_samples(X, channel, alpha, samples, source)
        est = mean_and_sem(out[:, 0] - out[:, 3])
    else:
        a = mean_and_sem(one_step_samples(X, channel, alpha, samples, source.derive(DRIFT, 1))[:, 0])
        b = mean_and_sem(one_step_samples(X, channel.as_soft(), alpha, samples,
                                          source.derive(DRIFT, 2))[:, 3])
        est = EstimateWithError(a.value - b.value, math.hypot(a.std_error, b.std_error), samples)
    return ExcessDrift(est, predicted, q, minority)


def early_drift_slope(traj: Trajectory, window: int) -> EstimateWithError:
    """Least-squares slope of U against step over the first ``window``
    probe intervals (``window + 1`` probes)."""
    if window < 1 or len(traj.steps) < window + 1:
        raise ParameterError(
            f"need at least window+1={window + 1} probes, trajectory has {len(traj.steps)}")
    x = traj.steps[: window + 1].astype(np.float64)
    y = traj.U[: window + 1]
    if window == 1:
        return EstimateWithError(float((y[1] - y[0]) / (x[1] - x[0])), 0.0, 2)
    res = stats.linregress(x, y)
    se = 0.0 if not math.isfinite(res.stderr) else float(res.stderr)
    return EstimateWithError(float(res.slope), se, window + 1)


def consensus_time_empirical(traj: Trajectory, U_star: float) -> Optional[int]:
    """Step of the first probe with U >= U_star, or None."""
    hit = np.flatnonzero(traj.U >= U_star)
    return int(traj.steps[hit[0]]) if hit.size else None


def ensemble_consensus_times(ensemble: EnsembleResult, U_star: float) -> List[int]:
    """First-crossing steps over trials that also end at or above ``U_star``."""
    times = []
    for tr in ensemble.trajectories:
        t = consensus_time_empirical(tr, U_star)
        if t is not None and tr.final_U >= U_star:
            times.append(t)
    return times


def wilson_interval(successes: int, n: int, confidence: float = 0.95):
    ci = stats.binomtest(int(successes), int(n)).proportion_ci(confidence, method="wilson")
    return float(ci.low), float(ci.high)


def fixation_estimate(ensemble: EnsembleResult, label: int) -> FixationEstimate:
    counts = ensemble.winner_counts
    n = int(counts.sum())
    if n == 0:
        raise ParameterError("no decided trials")
    k = int(counts[label])
    p = k / n
    lo, hi = wilson_interval(k, n)
    return FixationEstimate(p, math.sqrt(p * (1.0 - p) / n), n, lo, hi, ensemble.undecided)


def fixation_scale_fit(gammas, fractions, std_errors=None) -> EstimateWithError:
    """Fit ``c`` in ``1 / (1 + exp(-c * gamma_h))`` to measured fixation
    fractions. The diffusion surrogate fixes the scale of ``gamma_h`` only up
    to a constant; ``c = 1`` is the nominal value."""
    g = np.asarray(gammas, dtype=np.float64)
    f = np.asarray(fractions, dtype=np.float64)
    if g.size < 1 or g.shape != f.shape:
        raise ParameterError("need matching, non-empty gamma and fraction arrays")
    sigma = None
    if std_errors is not None:
        # floor keeps all-or-nothing points from dominating the fit
        sigma = np.maximum(np.asarray(std_errors, dtype=np.float64), 1e-3)
    (c,), cov = optimize.curve_fit(lambda x, c: 1.0 / (1.0 + np.exp(-c * x)), g, f, p0=[1.0],
                                   sigma=sigma, absolute_sigma=sigma is not None)
    se = float(np.sqrt(cov[0, 0])) if np.isfinite(cov[0, 0]) else math.inf
    return EstimateWithError(float(c), se, int(g.size))


def loglog_fit(points: Sequence[Tuple[float, float]]) -> ScalingFit:
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise ParameterError("need at least two (x, y) points")
    if np.any(pts <= 0):
        raise ParameterError("log-log fit needs strictly positive x and y")
    lx, ly = np.log(pts[:, 0]), np.log(pts[:, 1])
    res = stats.linregress(lx, ly)
    r2 = min(max(float(res.rvalue) ** 2, 0.0), 1.0)
    if not math.isfinite(r2):
        r2 = 1.0
    return ScalingFit(float(res.slope), float(res.intercept), r2, tuple(zip(lx.tolist(), ly.tolist())))


def effective_alpha_fit(trajectories, K: int, m: float = 1):
    """Single alpha shared across population sizes that best matches the
    probed U(t) to the mean-field curve. Returns ``(alpha, residual)``.

    ``trajectories`` holds ``(N, traj)`` pairs; ``traj`` may be a
    :class:`Trajectory` or a ``(steps, U)`` pair.
    """
    data = []
    for N, tr in trajectories:
        if isinstance(tr, Trajectory):
            data.append((N, tr.steps.astype(np.float64), tr.U))
        else:
            t, u = tr
            data.append((N, np.asarray(t, dtype=np.float64), np.asarray(u, dtype=np.float64)))
    if not data:
        raise ParameterError("no trajectories to fit")

    def sse(a):
        return math.fsum(float(np.sum((u - meanfield_U(t, N, K, m, a)) ** 2)) for N, t, u in data)

    lo, hi = 1e-6, 1.0
    res = optimize.minimize_scalar(sse, bounds=(lo, hi), method="bounded",
                                   options={"xatol": 1e-7})
    best_a, best = float(res.x), float(res.fun)
    coarse = np.linspace(lo, hi, 50)
    coarse_vals = np.array([sse(a) for a in coarse])
    if coarse_vals.min() < best - 1e-12:
        # objective is not unimodal here; fall back to a dense grid
        grid = np.linspace(lo, hi, 1000)
        vals = np.array([sse(a) for a in grid])
        i = int(np.argmin(vals))
        best_a, best = float(grid[i]), float(vals[i])
    return best_a, best


def snapshot_states(N, K, alpha, channel: ChannelSpec, times, source: RandomSource):
    """States of one run from the symmetric start, saved at the given steps."""
    times = sorted(int(t) for t in times)
    m = int(channel.bandwidth) if channel.quantized else 0
    streams = _Streams(source, m)
    X = np.full((N, K), 1.0 / K)
    out = []
    t = 0
    for target in times:
        evolve(X, target - t, alpha, channel, streams)
        t = target
        out.append(X.copy())
    return out


def log_spaced_steps(first: int, last: int, count: int):
    return sorted(set(np.unique(np.geomspace(first, last, count).round().astype(int)).tolist()))
