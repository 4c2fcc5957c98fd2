"""The gossip Markov process: pair scheduling, single steps, full runs and
seeded ensembles."""
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np

from . import kernels
from .channels import ChannelSpec, emit_message
from .errors import ConfigError, ParameterError
from .observables import ObservableRecord
from .rng import INIT, MESSAGE, PAIR, TRIAL, RandomSource, as_generator
from .simplex import as_simplex, listener_update

CHUNK = 1 << 16

STOP_NONE = "none"
STOP_THRESHOLD = "threshold"
STOP_ABSORPTION = "absorption"
STOP_RULES = (STOP_NONE, STOP_THRESHOLD, STOP_ABSORPTION)

INIT_SYMMETRIC = "symmetric"
INIT_DIRICHLET = "dirichlet"
INIT_EXPLICIT = "explicit"
INIT_KINDS = (INIT_SYMMETRIC, INIT_DIRICHLET, INIT_EXPLICIT)

REASON_HORIZON = "horizon"
REASON_THRESHOLD = "threshold"
REASON_ABSORBED = "absorbed"


@dataclass(frozen=True)
class PopulationState:
    agents: np.ndarray
    step_count: int = 0

    def __post_init__(self):
        X = np.array(self.agents, dtype=np.float64)
        if X.ndim != 2:
            raise ParameterError(f"agents must be an (N, K) array, got shape {X.shape}")
        N, K = X.shape
        if N < 2:
            raise ParameterError(f"need N >= 2 agents, got {N}")
        X = np.vstack([as_simplex(row) for row in X])
        X.setflags(write=False)
        object.__setattr__(self, "agents", X)

    @property
    def N(self) -> int:
        return self.agents.shape[0]

    @property
    def K(self) -> int:
        return self.agents.shape[1]

    @classmethod
    def symmetric(cls, N: int, K: int) -> "PopulationState":
        return cls(np.full((N, K), 1.0 / K))


@dataclass(frozen=True)
class SimConfig:
    N: int
    K: int
    alpha: float
    channel: ChannelSpec = field(default_factory=ChannelSpec.hard)
    init: str = INIT_SYMMETRIC
    concentration: float = 1.0
    init_states: Optional[tuple] = None
    horizon: int = 10_000
    probe_every: int = 1
    stop: str = STOP_NONE
    U_star: float = 0.9
    seed: int = 0

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 2:
            raise ConfigError(f"must be an integer >= 2, got {self.N!r}", "N")
        if int(self.K) != self.K or self.K < 2:
            raise ConfigError(f"must be an integer >= 2, got {self.K!r}", "K")
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigError(f"must lie in (0, 1], got {self.alpha!r}", "alpha")
        if self.init not in INIT_KINDS:
            raise ConfigError(f"must be one of {INIT_KINDS}, got {self.init!r}", "init")
        if self.init == INIT_DIRICHLET and not self.concentration > 0:
            raise ConfigError("must be positive", "concentration")
        if self.init == INIT_EXPLICIT:
            if self.init_states is None:
                raise ConfigError("required when init = 'explicit'", "init_states")
            arr = np.asarray(self.init_states, dtype=np.float64)
            if arr.ndim != 2 or arr.shape[1] != self.K or arr.shape[0] not in (1, self.N):
                raise ConfigError(
                    f"needs shape (1, K) or (N, K) = ({self.N}, {self.K}), got {arr.shape}",
                    "init_states")
            object.__setattr__(self, "init_states", tuple(map(tuple, arr.tolist())))
        if int(self.horizon) != self.horizon or self.horizon < 1:
            raise ConfigError(f"must be an integer >= 1, got {self.horizon!r}", "horizon")
        if int(self.probe_every) != self.probe_every or self.probe_every < 1:
            raise ConfigError(f"must be an integer >= 1, got {self.probe_every!r}", "probe_every")
        if self.stop not in STOP_RULES:
            raise ConfigError(f"must be one of {STOP_RULES}, got {self.stop!r}", "stop")
        if self.stop == STOP_THRESHOLD and not 1.0 / self.K < self.U_star < 1.0:
            raise ConfigError(f"must lie in (1/K, 1), got {self.U_star!r}", "U_star")
        try:
            self.channel.check_K(self.K)
        except ValueError as exc:
            raise ConfigError(str(exc), "bias_h") from None

    def with_(self, **changes) -> "SimConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        d = {"N": self.N, "K": self.K, "alpha": self.alpha}
        d.update(self.channel.to_dict())
        d["init"] = self.init
        if self.init == INIT_DIRICHLET:
            d["concentration"] = self.concentration
        if self.init == INIT_EXPLICIT:
            d["init_states"] = [list(r) for r in self.init_states]
        d.update(horizon=self.horizon, probe_every=self.probe_every, stop=self.stop,
                 U_star=self.U_star, seed=self.seed)
        return d


@dataclass
class Trajectory:
    """Probed time series of one run plus its terminal summary."""
    steps: np.ndarray
    means: np.ndarray
    q: np.ndarray
    N: int
    reason: str
    winner: Optional[int]
    consensus_step: Optional[int]

    @property
    def U(self) -> np.ndarray:
        return np.einsum("ij,ij->i", self.means, self.means)

    @property
    def V(self) -> np.ndarray:
        return np.maximum(self.N * (self.q - self.U), 0.0)

    @property
    def final_U(self) -> float:
        return float(self.U[-1])

    def record(self, i: int) -> ObservableRecord:
        return ObservableRecord.from_moments(self.means[i], float(self.q[i]), self.N)

    @property
    def probes(self):
        return [(int(s), self.record(i)) for i, s in enumerate(self.steps)]

    @property
    def decided(self) -> bool:
        return self.reason != REASON_HORIZON


@dataclass
class EnsembleResult:
    trajectories: List[Trajectory]
    K: int

    @property
    def trials(self) -> int:
        return len(self.trajectories)

    @property
    def winner_counts(self) -> np.ndarray:
        counts = np.zeros(self.K, dtype=np.int64)
        for tr in self.trajectories:
            if tr.decided and tr.winner is not None:
                counts[tr.winner] += 1
        return counts

    @property
    def decided(self) -> int:
        return int(self.winner_counts.sum())

    @property
    def undecided(self) -> int:
        return self.trials - self.decided

    @property
    def consensus_steps(self) -> List[int]:
        return [tr.consensus_step for tr in self.trajectories if tr.consensus_step is not None]


def select_pair(N: int, rng):
    """Uniform ordered (speaker, listener) pair with speaker != listener; two uniforms."""
    if N < 2:
        raise ParameterError(f"need N >= 2, got {N}")
    u = as_generator(rng).random(2)
    return kernels.pair_from_uniforms(u[0], u[1], N)


def step(state: PopulationState, alpha: float, channel: ChannelSpec, rng) -> PopulationState:
    gen = as_generator(rng)
    s, l = select_pair(state.N, gen)
    y = emit_message(state.agents[s], channel, gen)
    X = state.agents.copy()
    X[l] = listener_update(X[l], y, alpha)
    return PopulationState(X, state.step_count + 1)


def detect_absorption(state) -> Optional[int]:
    """Label k if every agent sits on vertex k (to 1e-12 per coordinate)."""
    X = np.asarray(getattr(state, "agents", state), dtype=np.float64)
    k = int(np.argmax(X[0]))
    target = np.zeros(X.shape[1])
    target[k] = 1.0
    if np.all(np.abs(X - target) <= kernels.ABSORB_TOL):
        return k
    return None


def winner_of(xbar) -> Optional[int]:
    """Argmax of the mean with lowest-index tie-break; None at exact symmetry."""
    xbar = np.asarray(xbar)
    k = int(np.argmax(xbar))
    if np.all(xbar == xbar[k]):
        return None
    return k


def initial_state(config: SimConfig, source: RandomSource) -> np.ndarray:
    N, K = config.N, config.K
    if config.init == INIT_SYMMETRIC:
        return np.full((N, K), 1.0 / K)
    if config.init == INIT_DIRICHLET:
        gen = source.derive(INIT).generator()
        return gen.dirichlet(np.full(K, config.concentration), size=N)
    arr = np.asarray(config.init_states, dtype=np.float64)
    arr = np.vstack([as_simplex(r) for r in arr])
    if arr.shape[0] == 1:
        arr = np.repeat(arr, N, axis=0)
    return arr


class _Streams:
    """Pair and message uniforms drawn from independent child streams, so the
    pair sequence is the same for every channel and chunking is invisible."""

    def __init__(self, source: RandomSource, m: int):
        self.pair = source.derive(PAIR).generator()
        self.msg = source.derive(MESSAGE).generator()
        self.m = m

    def draw(self, n):
        pair_u = self.pair.random((n, 2))
        msg_u = self.msg.random((n, self.m)) if self.m else np.empty((n, 0))
        return pair_u, msg_u


def _channel_args(channel: ChannelSpec):
    m = 0 if not channel.quantized else int(channel.bandwidth)
    return m, 1.0 / channel.T, channel.h


def evolve(X: np.ndarray, nsteps: int, alpha: float, channel: ChannelSpec, streams: _Streams):
    """Advance ``X`` in place by ``nsteps`` interactions without probing."""
    m, inv_T, h = _channel_args(channel)
    sums = np.empty(X.shape[1])
    kernels._refresh(X, sums)
    ps = np.empty(2, dtype=np.int64)
    pm = np.empty((2, X.shape[1]))
    pq = np.empty(2)
    done = 0
    while done < nsteps:
        n = min(CHUNK, nsteps - done)
        pair_u, msg_u = streams.draw(n)
        kernels.simulate_chunk(X, sums, pair_u, msg_u, float(alpha), m > 0, inv_T, h,
                               0, 1 << 62, -1, 2.0, False, False, ps, pm, pq)
        done += n
    return X


def run(config: SimConfig, source: Optional[RandomSource] = None) -> Trajectory:
    """Simulate one trajectory. Without ``source`` this is trial 0 of
    :func:`run_ensemble` for the same config."""
    if source is None:
        source = RandomSource(config.seed).derive(TRIAL, 0)
    channel = config.channel
    m, inv_T, h = _channel_args(channel)
    streams = _Streams(source, m)
    X = np.ascontiguousarray(initial_state(config, source))
    N, K = X.shape
    sums = np.empty(K)
    sq = kernels._refresh(X, sums)
    steps = [np.array([0], dtype=np.int64)]
    means = [(sums / N)[None, :]]
    qs = [np.array([sq / N])]

    stop_thr = config.stop == STOP_THRESHOLD
    stop_abs = config.stop == STOP_ABSORPTION
    status = kernels.STATUS_RUNNING
    U0 = float(np.dot(means[0][0], means[0][0]))
    if stop_thr and U0 >= config.U_star:
        status = kernels.STATUS_THRESHOLD
    elif stop_abs and detect_absorption(X) is not None:
        status = kernels.STATUS_ABSORBED

    t = 0
    while t < config.horizon and status == kernels.STATUS_RUNNING:
        n = min(CHUNK, config.horizon - t)
        pair_u, msg_u = streams.draw(n)
        cap = n // config.probe_every + 2
        ps = np.empty(cap, dtype=np.int64)
        pm = np.empty((cap, K))
        pq = np.empty(cap)
        done, nprobe, status = kernels.simulate_chunk(
            X, sums, pair_u, msg_u, float(config.alpha), m > 0, inv_T, h,
            t, config.probe_every, config.horizon, float(config.U_star),
            stop_thr, stop_abs, ps, pm, pq)
        steps.append(ps[:nprobe])
        means.append(pm[:nprobe])
        qs.append(pq[:nprobe])
        t += done

    steps = np.concatenate(steps)
    means = np.concatenate(means)
    qs = np.concatenate(qs)
    if status == kernels.STATUS_THRESHOLD:
        reason = REASON_THRESHOLD
    elif status == kernels.STATUS_ABSORBED:
        reason = REASON_ABSORBED
    else:
        reason = REASON_HORIZON
    winner = consensus = None
    if reason != REASON_HORIZON:
        winner = winner_of(means[-1])
        consensus = int(steps[-1])
    return Trajectory(steps, means, qs, N, reason, winner, consensus)


def default_workers() -> int:
    return max(1, int(os.environ.get("QSG_WORKERS", "1")))


def run_ensemble(config: SimConfig, trials: int, workers: Optional[int] = None) -> EnsembleResult:
    """``trials`` independent runs; trial ``i`` always uses stream ``(TRIAL, i)``."""
    if trials < 1:
        raise ParameterError(f"trials must be >= 1, got {trials}")
    root = RandomSource(config.seed)
    workers = default_workers() if workers is None else workers

    def one(i):
        return run(config, root.derive(TRIAL, i))

    if workers <= 1 or trials == 1:
        trajs = [one(i) for i in range(trials)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            trajs = list(pool.map(one, range(trials)))
    return EnsembleResult(trajs, config.K)
