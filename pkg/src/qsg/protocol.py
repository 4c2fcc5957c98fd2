"""Neutral naming-drift harness with synthetic agents.

Each interaction picks an ordered (speaker, listener) pair. The speaker emits
``m`` labels from its own memory; the listener first produces its own
response from its pre-step memory (logged, never stored), then records the
speaker's labels. Probes sample every agent without touching any memory.
"""
import string
from collections import deque
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from . import kernels
from .dynamics import winner_of
from .errors import ConfigError, ProtocolViolation
from .observables import ObservableRecord
from .rng import MESSAGE, PAIR, PROBE, RESPONSE, TRIAL, RandomSource
from .simplex import as_simplex, label_from_uniform, listener_update

PAD = -1
PAD_TOKEN = "<PAD>"


class AgentMemory:
    """Ring buffer of the last ``H`` observed labels, oldest first, PAD-filled."""

    def __init__(self, H: int, labels=()):
        if H < 1:
            raise ValueError(f"memory size H must be >= 1, got {H}")
        self.H = H
        self._buf = deque([PAD] * H, maxlen=H)
        for lab in labels:
            self.push(lab)

    def push(self, label: int):
        self._buf.append(int(label))

    def view(self) -> tuple:
        return tuple(self._buf)

    def counts(self, K: int) -> np.ndarray:
        c = np.zeros(K)
        for lab in self._buf:
            if lab != PAD:
                c[lab] += 1
        return c

    def copy(self) -> "AgentMemory":
        new = AgentMemory(self.H)
        new._buf = deque(self._buf, maxlen=self.H)
        return new

    def __len__(self):
        return self.H

    def __eq__(self, other):
        return isinstance(other, AgentMemory) and self.view() == other.view()

    def __repr__(self):
        return f"AgentMemory({list(self._buf)})"


def frequency_distribution(memory: AgentMemory, K: int, smoothing: float = 1.0) -> np.ndarray:
    """Add-``smoothing`` frequencies of the non-PAD memory entries."""
    c = memory.counts(K)
    return (c + smoothing) / (c.sum() + smoothing * K)


def frequency_policy(memory: AgentMemory, m: int, rng, K: int, smoothing: float = 1.0) -> List[int]:
    p = frequency_distribution(memory, K, smoothing)
    return [label_from_uniform(p, u) for u in rng.random(m)]


class FrequencyAgent:
    """Synthetic speaker that samples from smoothed counts of its memory."""

    def __init__(self, K: int, H: int, smoothing: float = 1.0):
        self.K = K
        self.memory = AgentMemory(H)
        self.smoothing = smoothing

    def speak(self, m: int, rng) -> List[int]:
        return frequency_policy(self.memory.copy(), m, rng, self.K, self.smoothing)

    def observe(self, labels):
        for lab in labels:
            self.memory.push(lab)

    def snapshot(self):
        return self.memory.view()


class QSGAgent:
    """Bridge agent whose memory is a simplex state updated by the listener rule."""

    def __init__(self, x, alpha: float):
        self.x = as_simplex(x)
        self.alpha = alpha
        self.K = self.x.size

    def speak(self, m: int, rng) -> List[int]:
        return qsg_policy_bridge(self.x, m, rng)

    def observe(self, labels):
        y = np.bincount(np.asarray(labels, dtype=np.int64), minlength=self.K) / len(labels)
        self.x = listener_update(self.x, y, self.alpha)

    def snapshot(self):
        return tuple(self.x.tolist())


def qsg_policy_bridge(x, m: int, rng) -> List[int]:
    """``m`` i.i.d. labels from the simplex state ``x``."""
    x = as_simplex(x, copy=False)
    return [label_from_uniform(x, u) for u in rng.random(m)]


@dataclass(frozen=True)
class NNDConfig:
    N: int
    K: int
    m: int = 1
    H: int = 10
    referent: str = "ref_00"
    horizon: int = 1000
    probe_every: int = 1
    probe_samples_per_agent: int = 1
    U_star: float = 0.9
    seed: int = 0
    policy: str = "frequency"  # or "qsg"
    alpha: float = 1.0
    smoothing: float = 1.0
    stop_at_threshold: bool = True

    def __post_init__(self):
        for name, lo in (("N", 2), ("K", 2), ("m", 1), ("H", 1), ("horizon", 1),
                         ("probe_every", 1), ("probe_samples_per_agent", 1)):
            v = getattr(self, name)
            if int(v) != v or v < lo:
                raise ConfigError(f"must be an integer >= {lo}, got {v!r}", name)
        if self.policy not in ("frequency", "qsg"):
            raise ConfigError(f"must be 'frequency' or 'qsg', got {self.policy!r}", "policy")
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigError(f"must lie in (0, 1], got {self.alpha!r}", "alpha")
        if not 1.0 / self.K < self.U_star < 1.0:
            raise ConfigError(f"must lie in (1/K, 1), got {self.U_star!r}", "U_star")
        if self.smoothing <= 0:
            raise ConfigError("must be positive", "smoothing")

    def to_dict(self) -> dict:
        return dict(mode="nnd", N=self.N, K=self.K, m=self.m, H=self.H, referent=self.referent,
                    horizon=self.horizon, probe_every=self.probe_every,
                    probe_samples_per_agent=self.probe_samples_per_agent, U_star=self.U_star,
                    seed=self.seed, policy=self.policy, alpha=self.alpha,
                    smoothing=self.smoothing, stop_at_threshold=self.stop_at_threshold)


def make_population(config: NNDConfig):
    if config.policy == "qsg":
        u = np.full(config.K, 1.0 / config.K)
        return [QSGAgent(u, config.alpha) for _ in range(config.N)]
    return [FrequencyAgent(config.K, config.H, config.smoothing) for _ in range(config.N)]


@dataclass
class StepLog:
    speaker: int
    listener: int
    spoken: List[int]
    response: List[int]


class _NNDStreams:
    def __init__(self, source: RandomSource):
        self.pair = source.derive(PAIR).generator()
        self.speech = source.derive(MESSAGE).generator()
        self.response = source.derive(RESPONSE).generator()
        self.probe = source.derive(PROBE).generator()


def _check_labels(labels, m, K):
    if len(labels) != m:
        raise ProtocolViolation(f"policy emitted {len(labels)} labels, expected {m}")
    for lab in labels:
        if not (isinstance(lab, (int, np.integer)) and 0 <= lab < K):
            raise ProtocolViolation(f"label {lab!r} is outside the vocabulary [0, {K})")


def nnd_step(population, config: NNDConfig, streams) -> StepLog:
    """One delayed-reveal interaction; only the listener's memory changes."""
    if not isinstance(streams, _NNDStreams):
        streams = _NNDStreams(streams)
    u = streams.pair.random(2)
    s, l = kernels.pair_from_uniforms(u[0], u[1], len(population))
    spoken = population[s].speak(config.m, streams.speech)
    _check_labels(spoken, config.m, config.K)
    response = population[l].speak(config.m, streams.response)
    _check_labels(response, config.m, config.K)
    population[l].observe(spoken)
    return StepLog(int(s), int(l), list(spoken), list(response))


def probe(population, config: NNDConfig, rng) -> np.ndarray:
    """Empirical label frequencies from measurement-only samples of every agent."""
    counts = np.zeros(config.K)
    for agent in population:
        for _ in range(config.probe_samples_per_agent):
            lab = agent.speak(1, rng)
            _check_labels(lab, 1, config.K)
            counts[lab[0]] += 1
    return counts / counts.sum()


@dataclass
class NNDTrajectory:
    steps: np.ndarray
    probe_means: np.ndarray
    exact_means: Optional[np.ndarray]
    exact_q: Optional[np.ndarray]
    N: int
    consensus_step: Optional[int]
    winner: Optional[int]
    log: List[StepLog] = field(default_factory=list)

    @property
    def U(self) -> np.ndarray:
        """Exact-state U when agents expose their state, else the probe proxy."""
        means = self.exact_means if self.exact_means is not None else self.probe_means
        return np.einsum("ij,ij->i", means, means)

    @property
    def probe_U(self) -> np.ndarray:
        return np.einsum("ij,ij->i", self.probe_means, self.probe_means)


def run_nnd(config: NNDConfig, source: Optional[RandomSource] = None,
            keep_log: bool = False) -> NNDTrajectory:
    if source is None:
        source = RandomSource(config.seed).derive(TRIAL, 0)
    streams = _NNDStreams(source)
    pop = make_population(config)
    exact = config.policy == "qsg"
    steps, pmeans, emeans, eq, log = [], [], [], [], []

    def record(t):
        steps.append(t)
        pmeans.append(probe(pop, config, streams.probe))
        if exact:
            X = np.array([a.x for a in pop])
            emeans.append(X.sum(axis=0) / len(pop))
            eq.append(float(np.einsum("ij,ij->", X, X)) / len(pop))
        current = emeans[-1] if exact else pmeans[-1]
        return float(np.dot(current, current))

    consensus = None
    U = record(0)
    if config.stop_at_threshold and U >= config.U_star:
        consensus = 0
    t = 0
    while consensus is None and t < config.horizon:
        entry = nnd_step(pop, config, streams)
        t += 1
        if keep_log:
            log.append(entry)
        if t % config.probe_every == 0 or t == config.horizon:
            U = record(t)
            if config.stop_at_threshold and U >= config.U_star:
                consensus = t
    if consensus is None and not config.stop_at_threshold:
        hit = [s for s, m_ in zip(steps, emeans if exact else pmeans) if np.dot(m_, m_) >= config.U_star]
        consensus = hit[0] if hit else None
    final = (emeans if exact else pmeans)[-1]
    return NNDTrajectory(
        np.asarray(steps, dtype=np.int64), np.asarray(pmeans),
        np.asarray(emeans) if exact else None, np.asarray(eq) if exact else None,
        config.N, consensus, winner_of(final) if consensus is not None else None, log)


def run_nnd_ensemble(config: NNDConfig, trials: int) -> List[NNDTrajectory]:
    root = RandomSource(config.seed)
    return [run_nnd(config, root.derive(TRIAL, i)) for i in range(trials)]


def nnd_records(traj: NNDTrajectory):
    """``(step, provenance, ObservableRecord)`` rows: exact-state rows when
    available, and probe-estimated rows always."""
    rows = []
    for i, s in enumerate(traj.steps):
        if traj.exact_means is not None:
            rows.append((int(s), "exact",
                         ObservableRecord.from_moments(traj.exact_means[i], traj.exact_q[i], traj.N)))
        rows.append((int(s), "probe", ObservableRecord.from_probe(traj.probe_means[i])))
    return rows


def label_names(K: int, seed: int, length: int = 5) -> List[str]:
    """Distinct synthetic lowercase label strings, fixed by ``seed``."""
    gen = RandomSource(seed).derive(99).generator()
    letters = np.array(list(string.ascii_lowercase))
    names: List[str] = []
    while len(names) < K:
        cand = "".join(gen.choice(letters, size=length))
        if cand not in names:
            names.append(cand)
    return names


def render_memory(memory: AgentMemory, names: List[str]) -> List[str]:
    return [PAD_TOKEN if lab == PAD else names[lab] for lab in memory.view()]
