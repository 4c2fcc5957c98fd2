import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from qsg.dynamics import SimConfig, run_ensemble
from qsg.errors import ConfigError, ProtocolViolation
from qsg.protocol import (PAD, PAD_TOKEN, AgentMemory, FrequencyAgent, NNDConfig, QSGAgent,
                          _NNDStreams, frequency_distribution, frequency_policy, label_names,
                          make_population, nnd_records, nnd_step, probe, qsg_policy_bridge,
                          render_memory, run_nnd, run_nnd_ensemble)
from qsg.rng import RandomSource

from conftest import assert_frequencies


class TestMemory:
    def test_ring_buffer(self):
        mem = AgentMemory(3, [0, 1])
        assert mem.view() == (PAD, 0, 1)
        mem.push(2)
        assert mem.view() == (0, 1, 2) and len(mem) == 3

    def test_repeats_pushed(self):
        mem = AgentMemory(4)
        for lab in [1, 1]:
            mem.push(lab)
        assert mem.view() == (PAD, PAD, 1, 1)

    def test_bad_size(self):
        with pytest.raises(ValueError):
            AgentMemory(0)

    @settings(max_examples=200, deadline=None)
    @given(st.integers(1, 12), st.lists(st.integers(0, 4), max_size=40))
    def test_length_invariant(self, H, labels):
        mem = AgentMemory(H)
        for lab in labels:
            mem.push(lab)
            assert len(mem.view()) == H
        tail = labels[-H:]
        assert mem.view() == tuple([PAD] * (H - len(tail)) + tail)
        assert mem.counts(5).sum() == len(tail)


class TestPolicies:
    def test_smoothing_arithmetic(self):
        mem = AgentMemory(10, [0] * 10)
        p = frequency_distribution(mem, 3)
        assert p[0] == pytest.approx(11 / 13) and p[1] == pytest.approx(1 / 13)

    def test_empty_memory_is_uniform(self):
        assert frequency_distribution(AgentMemory(5), 4).tolist() == [0.25] * 4

    def test_support(self):
        g = RandomSource(1).generator()
        mem = AgentMemory(6, [2, 2, 1])
        labs = frequency_policy(mem, 500, g, 3)
        assert len(labs) == 500 and set(labs) <= {0, 1, 2}

    def test_speak_does_not_mutate(self):
        agent = FrequencyAgent(3, 5)
        agent.observe([0, 2, 2])
        before = agent.memory.view()
        agent.speak(4, RandomSource(2).generator())
        assert agent.memory.view() == before

    def test_bridge_one_hot(self):
        g = RandomSource(3).generator()
        assert qsg_policy_bridge([0.0, 1.0, 0.0], 6, g) == [1] * 6

    def test_bridge_observe(self):
        a = QSGAgent([0.5, 0.5], 0.5)
        a.observe([0])
        assert a.x.tolist() == [0.75, 0.25]
        b = QSGAgent([1 / 3] * 3, 1.0)
        b.observe([0, 2, 2, 2])
        assert b.x.tolist() == [0.25, 0.0, 0.75]


class TestStep:
    def cfg(self, **kw):
        base = dict(N=4, K=3, m=1, H=3)
        base.update(kw)
        return NNDConfig(**base)

    def test_delayed_reveal(self):
        cfg = self.cfg(m=2)
        pop = make_population(cfg)
        g = RandomSource(4).generator()
        for a in pop:
            a.observe(list(g.integers(0, 3, 2)))
        source = RandomSource(5)
        snapshot = [a.memory.copy() for a in pop]
        entry = nnd_step(pop, cfg, _NNDStreams(source))
        # speaker unchanged, listener = old memory + spoken labels
        assert pop[entry.speaker].memory == snapshot[entry.speaker]
        expected = snapshot[entry.listener].copy()
        for lab in entry.spoken:
            expected.push(lab)
        assert pop[entry.listener].memory == expected
        for i, a in enumerate(pop):
            if i != entry.listener:
                assert a.memory == snapshot[i]
        # the response came from the pre-step memory: replay the response stream
        replay = _NNDStreams(source)
        replay.pair.random(2)
        frequency_policy(snapshot[entry.speaker], 2, replay.speech, 3)
        assert frequency_policy(snapshot[entry.listener], 2, replay.response, 3) == entry.response

    def test_example_push(self):
        cfg = self.cfg()
        pop = make_population(cfg)
        for a in pop:
            a.memory = AgentMemory(3, [0, 1])

        class Fixed(FrequencyAgent):
            def speak(self, m, rng):
                return [2] * m

        speaker = Fixed(3, 3)
        pop = [speaker] + [FrequencyAgent(3, 3) for _ in range(3)]
        for a in pop[1:]:
            a.memory = AgentMemory(3, [0, 1])
        streams = _NNDStreams(RandomSource(6))
        for _ in range(50):
            before = [a.memory.copy() for a in pop]
            entry = nnd_step(pop, cfg, streams)
            if entry.speaker == 0:
                assert pop[entry.listener].memory.view() == before[entry.listener].view()[1:] + (2,)
                break

    def test_violation(self):
        class Rogue(FrequencyAgent):
            def speak(self, m, rng):
                return [7] * m

        cfg = self.cfg(N=2)
        with pytest.raises(ProtocolViolation):
            for _ in range(20):
                nnd_step([Rogue(3, 3), Rogue(3, 3)], cfg, _NNDStreams(RandomSource(7)))

    def test_wrong_count(self):
        class Short(FrequencyAgent):
            def speak(self, m, rng):
                return []

        with pytest.raises(ProtocolViolation):
            nnd_step([Short(3, 3), Short(3, 3)], self.cfg(N=2), _NNDStreams(RandomSource(8)))


class TestProbe:
    def test_vertex(self):
        cfg = NNDConfig(N=5, K=3, H=4, probe_samples_per_agent=3)
        pop = make_population(cfg)
        for a in pop:
            a.memory = AgentMemory(4, [1] * 4)
            a.smoothing = 1e-12
        # smoothing kept tiny to make the vertex exact to rounding
        assert np.allclose(probe(pop, cfg, RandomSource(9).generator()), [0, 1, 0])

    def test_empty_memories_uniform(self):
        cfg = NNDConfig(N=10, K=4, probe_samples_per_agent=1000)
        pop = make_population(cfg)
        freq = probe(pop, cfg, RandomSource(10).generator())
        assert_frequencies(freq * 10_000, [0.25] * 4)

    def test_measurement_only(self):
        g = RandomSource(11).generator()
        for _ in range(1000):
            cfg = NNDConfig(N=3, K=3, H=4, probe_samples_per_agent=2)
            pop = make_population(cfg)
            for a in pop:
                a.observe(list(g.integers(0, 3, int(g.integers(0, 6)))))
            before = [a.memory.view() for a in pop]
            probe(pop, cfg, g)
            assert [a.memory.view() for a in pop] == before


class TestConfig:
    @pytest.mark.parametrize("kw,field", [(dict(H=0), "H"), (dict(m=0), "m"),
                                          (dict(probe_samples_per_agent=0), "probe_samples_per_agent"),
                                          (dict(policy="llm"), "policy"), (dict(U_star=0.1), "U_star")])
    def test_validation(self, kw, field):
        base = dict(N=4, K=3)
        base.update(kw)
        with pytest.raises(ConfigError) as exc:
            NNDConfig(**base)
        assert exc.value.field == field


class TestRuns:
    def test_smoothing_caps_polarization(self):
        # with lambda = 1 the best a full memory can do is (H+1)/(H+K)
        H, K = 5, 3
        p = frequency_distribution(AgentMemory(H, [0] * H), K)
        cap = ((H + 1) ** 2 + (K - 1)) / (H + K) ** 2
        assert float(p @ p) == pytest.approx(cap) and cap < 0.9
        cfg = NNDConfig(N=6, K=K, H=H, horizon=3000, probe_samples_per_agent=20, seed=3)
        tr = run_nnd(cfg)
        assert tr.consensus_step is None and tr.probe_U.max() <= cap + 0.1

    def test_frequency_agents_converge(self):
        cfg = NNDConfig(N=6, K=3, H=5, horizon=20_000, probe_samples_per_agent=20, seed=3,
                        smoothing=0.01)
        tr = run_nnd(cfg)
        assert tr.exact_means is None
        assert tr.consensus_step is not None and tr.probe_U[-1] >= 0.9
        rows = nnd_records(tr)
        assert {r[1] for r in rows} == {"probe"}

    def test_bridge_records_both(self):
        cfg = NNDConfig(N=4, K=2, policy="qsg", horizon=200, seed=1)
        tr = run_nnd(cfg)
        rows = nnd_records(tr)
        assert {r[1] for r in rows} == {"exact", "probe"}
        exact = [r[2] for r in rows if r[1] == "exact"]
        assert all(abs(r.V - 4 * (r.q - r.U)) < 1e-9 for r in exact)

    def test_reproducible(self):
        cfg = NNDConfig(N=5, K=3, horizon=300, seed=12, stop_at_threshold=False)
        a, b = run_nnd(cfg), run_nnd(cfg)
        assert np.array_equal(a.probe_means, b.probe_means)

    def test_voter_absorption_bridge(self):
        cfg = NNDConfig(N=6, K=3, policy="qsg", alpha=1.0, horizon=10**5, U_star=0.999999, seed=4)
        trajs = run_nnd_ensemble(cfg, 1500)
        assert all(t.consensus_step is not None for t in trajs)
        wins = np.bincount([t.winner for t in trajs], minlength=3)
        assert stats.chisquare(wins).pvalue > 0.01

    def test_bridge_matches_dynamics_U(self):
        N, K, horizon = 8, 3, 120
        nnd = run_nnd_ensemble(NNDConfig(N=N, K=K, policy="qsg", alpha=1.0, horizon=horizon,
                                         stop_at_threshold=False, seed=5), 200)
        dyn = run_ensemble(SimConfig(N=N, K=K, alpha=1.0, horizon=horizon, probe_every=1, seed=6), 200)
        Un = np.array([t.U for t in nnd])
        Ud = np.array([t.U for t in dyn.trajectories])
        for t in (10, 40, 80, 120):
            se = math.hypot(Un[:, t].std(ddof=1), Ud[:, t].std(ddof=1)) / math.sqrt(200)
            assert abs(Un[:, t].mean() - Ud[:, t].mean()) <= 3 * se + 1e-12


def test_label_names():
    names = label_names(6, seed=1)
    assert len(set(names)) == 6 and all(len(n) == 5 and n.isalpha() for n in names)
    assert names == label_names(6, seed=1) and names != label_names(6, seed=2)
    rendered = render_memory(AgentMemory(3, [1]), names)
    assert rendered == [PAD_TOKEN, PAD_TOKEN, names[1]]
