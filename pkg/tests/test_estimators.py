import math

import numpy as np
import pytest
from scipy import stats

from qsg.channels import ChannelSpec
from qsg.dynamics import EnsembleResult, SimConfig, Trajectory, run, run_ensemble
from qsg.errors import ParameterError
from qsg.estimators import (EstimateWithError, consensus_time_empirical, early_drift_slope,
                            effective_alpha_fit, ensemble_consensus_times, excess_drift,
                            fixation_estimate, fixation_scale_fit, log_spaced_steps, loglog_fit,
                            mean_and_sem, one_step_drift, snapshot_states, wilson_interval)
from qsg.observables import observe, self_overlap
from qsg.rng import RandomSource
from qsg.theory import consensus_time, injection_U_drift, meanfield_U, total_U_drift

SYM_24_10 = 3.90625e-4
# drift estimates at symmetry carry float rounding of order eps * |dU|
ROUNDING = 1e-15


def synthetic(steps, U, N=10, reason="horizon"):
    steps = np.asarray(steps, dtype=np.int64)
    U = np.asarray(U, dtype=np.float64)
    # two-label one-vs-rest means with the requested U
    p = 0.5 + np.sqrt(np.maximum(2 * U - 1, 0)) / 2
    means = np.column_stack([p, 1 - p])
    return Trajectory(steps, means, U.copy(), N, reason, None, None)


class TestBasics:
    def test_mean_and_sem(self):
        est = mean_and_sem([1.0, 2.0, 3.0, 4.0])
        assert est.value == 2.5 and est.n == 4
        assert est.std_error == pytest.approx(np.std([1, 2, 3, 4], ddof=1) / 2)
        assert mean_and_sem([5.0]).std_error == 0.0
        with pytest.raises(ParameterError):
            mean_and_sem([])

    def test_pull(self):
        e = EstimateWithError(1.0, 0.5, 10)
        assert e.pull(0.0) == 2.0 and e.within(0.0) and not e.within(0.0, nsigma=1.5)
        assert EstimateWithError(1.0, 0.0, 3).pull(1.0) == 0.0


class TestOneStep:
    def test_soft_homogeneous_zero(self):
        X = np.tile([0.2, 0.3, 0.5], (6, 1))
        est = one_step_drift(X, ChannelSpec.soft(), 0.5, 1000, RandomSource(1))
        assert est.value == 0.0 and est.std_error == 0.0

    def test_hard_symmetric(self):
        X = np.full((24, 10), 0.1)
        est = one_step_drift(X, ChannelSpec.hard(), 0.5, 10**6, RandomSource(2))
        assert est.within(SYM_24_10, 3, ROUNDING)

    def test_two_agent_enumeration(self):
        # Hard, alpha=1, both agents at (0.5, 0.5): listener becomes a vertex
        # whichever pair and label occur, so U goes 0.5 -> 0.625
        X = np.full((2, 2), 0.5)
        outcomes = []
        for l in (0, 1):
            for label in (0, 1):
                Z = X.copy()
                Z[l] = np.eye(2)[label]
                outcomes.append(observe(Z).U - observe(X).U)
        exact = float(np.mean(outcomes))
        assert exact == pytest.approx(0.125)
        est = one_step_drift(X, ChannelSpec.hard(), 1.0, 10**5, RandomSource(3))
        assert est.within(exact, 3, ROUNDING)

    def test_two_agent_enumeration_heterogeneous(self):
        X = np.array([[0.8, 0.2], [0.3, 0.7]])
        a = 0.6
        exact = 0.0
        for s, l in ((0, 1), (1, 0)):
            for label in (0, 1):
                Z = X.copy()
                Z[l] = (1 - a) * Z[l] + a * np.eye(2)[label]
                exact += 0.5 * X[s, label] * (observe(Z).U - observe(X).U)
        est = one_step_drift(X, ChannelSpec.hard(), a, 200_000, RandomSource(4))
        assert est.within(exact, 3)

    @pytest.mark.parametrize("m", [1, 2, 3, 5, 10, 20])
    def test_homogeneous_matches_injection(self, m):
        g = RandomSource(50 + m).generator()
        x = g.dirichlet(np.ones(5))
        X = np.tile(x, (12, 1))
        est = one_step_drift(X, ChannelSpec.topm(m), 0.5, 200_000, RandomSource(60 + m))
        pred = injection_U_drift(float(x @ x), 12, m, 0.5)
        assert est.within(pred, 3, ROUNDING)

    def test_heterogeneous_total_drift(self):
        g = RandomSource(70).generator()
        X = g.dirichlet(np.ones(4), size=9)
        rec = observe(X)
        for m in (1, 3):
            est = one_step_drift(X, ChannelSpec.topm(m), 0.4, 400_000, RandomSource(71 + m))
            assert est.within(total_U_drift(rec.U, rec.V, 9, 4, m, 0.4).total, 3)

    def test_rejects_zero_samples(self):
        with pytest.raises(ParameterError):
            one_step_drift(np.full((3, 2), 0.5), ChannelSpec.hard(), 0.5, 0, RandomSource(0))


class TestExcess:
    def test_soft_rejected(self):
        with pytest.raises(ParameterError):
            excess_drift(np.full((3, 2), 0.5), ChannelSpec.soft(), 0.5, 10, RandomSource(0))

    def test_homogeneous_equals_full(self):
        X = np.tile([0.6, 0.3, 0.1], (8, 1))
        full = one_step_drift(X, ChannelSpec.hard(), 0.5, 5000, RandomSource(5))
        ex = excess_drift(X, ChannelSpec.hard(), 0.5, 5000, RandomSource(5))
        assert ex.estimate.value == full.value

    def test_vertex_consensus(self):
        X = np.tile([0.0, 1.0, 0.0], (8, 1))
        ex = excess_drift(X, ChannelSpec.hard(), 0.5, 5000, RandomSource(6))
        assert ex.estimate.value == 0.0 and ex.estimate.std_error == 0.0 and ex.predicted == 0.0

    def test_half_converged_snapshot(self):
        snaps = snapshot_states(24, 10, 0.5, ChannelSpec.hard(), [1500], RandomSource(7))
        X = snaps[0]
        assert 0.3 < self_overlap(X) < 0.95
        ex = excess_drift(X, ChannelSpec.hard(), 0.5, 10**6, RandomSource(8))
        assert ex.predicted == pytest.approx(0.25 / 576 * (1 - ex.q))
        assert ex.estimate.within(ex.predicted, 3)

    def test_pairing_reduces_variance(self):
        g = RandomSource(9).generator()
        wins = 0
        for r in range(10):
            X = g.dirichlet(np.full(5, 0.5), size=10)
            a = excess_drift(X, ChannelSpec.hard(), 0.5, 20_000, RandomSource(100 + r), paired=True)
            b = excess_drift(X, ChannelSpec.hard(), 0.5, 20_000, RandomSource(100 + r), paired=False)
            wins += a.estimate.std_error <= b.estimate.std_error
        assert wins >= 9


class TestSlopes:
    def test_exact_linear(self):
        steps = np.arange(0, 101, 10)
        tr = synthetic(steps, 0.5 + 1e-4 * steps)
        est = early_drift_slope(tr, 5)
        assert est.value == pytest.approx(1e-4, rel=1e-10) and est.n == 6

    def test_soft_symmetric(self):
        tr = run(SimConfig(N=8, K=4, alpha=0.5, channel=ChannelSpec.soft(), horizon=1000, probe_every=10))
        assert early_drift_slope(tr, 50).value == pytest.approx(0.0, abs=1e-20)

    def test_too_few_probes(self):
        with pytest.raises(ParameterError):
            early_drift_slope(synthetic([0, 1], [0.5, 0.6]), 2)

    def test_hard_ensemble(self):
        N, K, a = 24, 10, 0.5
        cfg = SimConfig(N=N, K=K, alpha=a, horizon=2, probe_every=1)
        ens = run_ensemble(cfg, 4000)
        est = mean_and_sem([early_drift_slope(tr, 2).value for tr in ens.trajectories])
        # the first step from symmetry is deterministic up to relabeling, so
        # the second step's expected drift is exact as well
        X1 = np.full((N, K), 1 / K)
        X1[0] = (1 - a) * X1[0] + a * np.eye(K)[0]
        rec = observe(X1)
        second = total_U_drift(rec.U, rec.V, N, K, 1, a).total
        expected = (SYM_24_10 + second) / 2
        assert est.within(expected, 3)
        assert abs(expected - SYM_24_10) / SYM_24_10 < 0.01


class TestConsensus:
    def test_starts_decided(self):
        assert consensus_time_empirical(synthetic([0, 5], [1.0, 1.0]), 0.9) == 0

    def test_never_crossed(self):
        assert consensus_time_empirical(synthetic([0, 5, 10], [0.5, 0.6, 0.7]), 0.9) is None

    def test_meanfield_trajectory(self):
        steps = np.arange(0, 400)
        U = meanfield_U(steps, 10, 3, 1, 1.0)
        t = consensus_time_empirical(_TrajectoryView(steps, U), 0.9)
        assert abs(t - consensus_time(0.9, 3, 10, 1, 1.0)) <= 1

    def test_ensemble_filter(self):
        a = synthetic([0, 5, 10], [0.5, 0.95, 0.97])
        b = synthetic([0, 5, 10], [0.5, 0.95, 0.6])
        ens = EnsembleResult([a, b], 2)
        assert ensemble_consensus_times(ens, 0.9) == [5]


class _TrajectoryView:
    """Steps and U only, for curves that are not two-label one-vs-rest."""

    def __init__(self, steps, U):
        self.steps, self.U, self.final_U = steps, U, float(U[-1])


class TestFixation:
    def test_all_won(self):
        tr = [Trajectory(np.array([0]), np.array([[1.0, 0.0]]), np.array([1.0]), 4, "absorbed", 0, 0)
              for _ in range(10)]
        est = fixation_estimate(EnsembleResult(tr, 2), 0)
        assert est.value == 1.0 and est.std_error == 0.0 and est.n == 10
        assert est.wilson_high == pytest.approx(1.0) and est.wilson_low < 1.0

    def test_no_decided(self):
        tr = [Trajectory(np.array([0]), np.array([[0.5, 0.5]]), np.array([0.5]), 4, "horizon", None, None)]
        with pytest.raises(ParameterError):
            fixation_estimate(EnsembleResult(tr, 2), 0)

    def test_undecided_reported(self):
        won = Trajectory(np.array([0]), np.array([[1.0, 0.0]]), np.array([1.0]), 4, "absorbed", 0, 0)
        open_ = Trajectory(np.array([0]), np.array([[0.5, 0.5]]), np.array([0.5]), 4, "horizon", None, None)
        est = fixation_estimate(EnsembleResult([won, open_, won], 2), 0)
        assert est.n == 2 and est.undecided == 1

    @pytest.mark.slow
    def test_neutral_voter(self):
        cfg = SimConfig(N=6, K=2, alpha=1.0, stop="absorption", horizon=10**6, probe_every=1)
        est = fixation_estimate(run_ensemble(cfg, 4000), 0)
        assert 0.0 <= est.value <= 1.0
        assert est.within(0.5, 3)

    def test_wilson_coverage(self):
        g = RandomSource(10).generator()
        reps, n, p = 10_000, 40, 0.3
        ks = g.binomial(n, p, size=reps)
        covered = 0
        for k in ks:
            lo, hi = wilson_interval(int(k), n)
            covered += lo <= p <= hi
        assert abs(covered / reps - 0.95) <= 0.02

    def test_scale_fit(self):
        g = np.array([0.25, 0.5, 1, 2, 4])
        f = 1 / (1 + np.exp(-0.8 * g))
        fit = fixation_scale_fit(g, f)
        assert fit.value == pytest.approx(0.8, rel=1e-6)
        with pytest.raises(ParameterError):
            fixation_scale_fit([], [])


class TestFits:
    def test_inverse_square(self):
        fit = loglog_fit([(x, 7 / x**2) for x in (2, 4, 8, 16)])
        assert fit.slope == pytest.approx(-2.0, abs=1e-9) and fit.r_squared == pytest.approx(1.0)
        assert fit.intercept == pytest.approx(math.log(7))

    def test_linear(self):
        assert loglog_fit([(1, 3), (2, 6), (5, 15)]).slope == pytest.approx(1.0)

    @pytest.mark.parametrize("pts", [[(1, 2)], [(0, 1), (1, 2)], [(1, -1), (2, 3)]])
    def test_invalid(self, pts):
        with pytest.raises(ParameterError):
            loglog_fit(pts)

    def test_drift_vs_N(self):
        pts = []
        for N in (8, 12, 16, 24, 32, 48, 64):
            X = np.full((N, 3), 1 / 3)
            est = one_step_drift(X, ChannelSpec.hard(), 0.5, 20_000, RandomSource(N))
            pts.append((N, est.value))
        assert -2.3 <= loglog_fit(pts).slope <= -1.7

    def _synthetic_sets(self, alpha, noise=0.0, seed=0):
        g = RandomSource(seed).generator()
        out = []
        for N in (8, 16, 32):
            t = np.linspace(0, 3 * N**2 / alpha**2, 60)
            U = meanfield_U(t, N, 3, 1, alpha) + noise * g.standard_normal(t.size)
            out.append((N, (t, U)))
        return out

    def test_alpha_noiseless(self):
        a, resid = effective_alpha_fit(self._synthetic_sets(0.3), 3, 1)
        assert a == pytest.approx(0.3, abs=1e-3) and resid < 1e-10

    def test_alpha_noisy(self):
        a, _ = effective_alpha_fit(self._synthetic_sets(0.3, 0.01, 1), 3, 1)
        assert a == pytest.approx(0.3, abs=0.02)

    def test_alpha_empty(self):
        with pytest.raises(ParameterError):
            effective_alpha_fit([], 3, 1)

    def test_alpha_from_runs(self):
        trajs = []
        for N in (8, 16, 32):
            cfg = SimConfig(N=N, K=3, alpha=0.5, horizon=int(8 * N**2), probe_every=N, seed=N)
            ens = run_ensemble(cfg, 20)
            for tr in ens.trajectories:
                trajs.append((N, tr))
        a, _ = effective_alpha_fit(trajs, 3, 1)
        assert 0.35 <= a <= 0.65


def test_log_spaced_steps():
    s = log_spaced_steps(10, 10_000, 30)
    assert s[0] == 10 and s[-1] == 10_000 and s == sorted(set(s))
