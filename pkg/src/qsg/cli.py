"""Command-line experiment runner.

    qsg run CONFIG -o OUT          one config, one or more trials
    qsg sweep CONFIG -o OUT        vary one axis (N, m, T, h, alpha)
    qsg drift-check CONFIG -o OUT  measured vs predicted excess drift
    qsg fixation CONFIG -o OUT     fixation probability over (N, h) for K=2
    qsg theory CONFIG -o OUT       mean-field U(t) curve

Exit codes: 0 success, 1 configuration error, 2 runtime error.
"""
import argparse
import logging
import math
import os
import sys

import numpy as np

from . import __version__, estimators, theory
from ._backend import BACKEND
from .channels import ChannelSpec
from .config import (apply_axis, load_config, nnd_config_from, sim_config_from, sweep_axis)
from .dynamics import (INIT_SYMMETRIC, STOP_ABSORPTION, STOP_NONE, default_workers,
                       run_ensemble)
from .errors import ConfigError
from .io import (ESTIMATE_HEADER, config_hash, estimate_row, fmt, now_iso, record_row,
                 trajectory_header, trajectory_rows, write_csv, write_manifest)
from .protocol import nnd_records, run_nnd_ensemble
from .rng import SNAPSHOT, RandomSource

log = logging.getLogger("qsg")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


def _build_id():
    return f"qsg {__version__} ({BACKEND})"


def _early_window(traj, config):
    """Probe intervals inside the first 5% of the characteristic time."""
    m = config.channel.bandwidth
    if math.isinf(m):
        m = 1
    t_early = 0.05 * m * config.N**2 / config.alpha**2
    n = int(np.searchsorted(traj.steps, t_early, side="right")) - 1
    return max(1, min(n, len(traj.steps) - 1))


def cmd_run(args, raw):
    trials = args.trials or raw.get("trials", 1)
    seed = args.seed if args.seed is not None else raw.get("seed", 0)
    out = args.out
    if raw.get("mode", "qsg") == "nnd":
        cfg = nnd_config_from(raw, seed=seed)
        trajs = run_nnd_ensemble(cfg, trials)
        rows = []
        for i, tr in enumerate(trajs):
            rows.extend(record_row(i, s, prov, rec) for s, prov, rec in nnd_records(tr))
        paths = [write_csv(os.path.join(out, "trajectory.csv"), trajectory_header(cfg.K), rows)]
        summary = [[i, tr.consensus_step, tr.winner, float(tr.U[-1])] for i, tr in enumerate(trajs)]
        paths.append(write_csv(os.path.join(out, "summary.csv"),
                               ["trial", "consensus_step", "winner", "final_U"], summary))
        return paths, cfg.to_dict(), seed

    cfg = sim_config_from(raw, seed=seed)
    ens = run_ensemble(cfg, trials, args.workers)
    rows = []
    for i, tr in enumerate(ens.trajectories):
        rows.extend(trajectory_rows(tr, i))
    paths = [write_csv(os.path.join(out, "trajectory.csv"), trajectory_header(cfg.K), rows)]
    summary = [[i, tr.reason, tr.winner, tr.consensus_step, tr.final_U]
               for i, tr in enumerate(ens.trajectories)]
    paths.append(write_csv(os.path.join(out, "summary.csv"),
                           ["trial", "reason", "winner", "consensus_step", "final_U"], summary))
    chash = config_hash(cfg.to_dict())
    est_rows = []
    slopes = [estimators.early_drift_slope(tr, _early_window(tr, cfg)).value
              for tr in ens.trajectories if len(tr.steps) >= 2]
    if slopes:
        est_rows.append(estimate_row("early_drift_slope", estimators.mean_and_sem(slopes), chash))
    if ens.consensus_steps:
        est_rows.append(estimate_row("consensus_step",
                                     estimators.mean_and_sem(ens.consensus_steps), chash))
    if ens.decided:
        for k in range(cfg.K):
            est_rows.append(estimate_row(f"fixation_label_{k}",
                                         estimators.fixation_estimate(ens, k), chash))
    paths.append(write_csv(os.path.join(out, "estimates.csv"), ESTIMATE_HEADER, est_rows))
    return paths, cfg.to_dict(), seed


SWEEP_HEADER = ["axis", "value", "trial", "step", "U", "V", "q", "S", "H", "M", "p_max",
                "meanfield_U", "predicted_drift", "consensus_step"]
SWEEP_SUMMARY_HEADER = ["axis", "value", "m", "N", "alpha", "trials", "decided",
                        "early_drift", "early_drift_se", "predicted_symmetric_drift",
                        "normalized_drift", "median_consensus_step", "theory_consensus_step"]


def cmd_sweep(args, raw):
    axis, values = sweep_axis(raw)
    trials = args.trials or raw.get("trials", 1)
    seed = args.seed if args.seed is not None else raw.get("seed", 0)
    base = sim_config_from(raw, seed=seed)
    rows, summary = [], []
    for value in sorted(values):
        try:
            cfg = apply_axis(base, axis, value)
        except ValueError as exc:
            raise raw.error("values", f"{value!r}: {exc}") from None
        ens = run_ensemble(cfg, trials, args.workers)
        m = cfg.channel.bandwidth
        m_theory = 1 if math.isinf(m) else m
        for i, tr in enumerate(ens.trajectories):
            mf = theory.meanfield_U(tr.steps, cfg.N, cfg.K, m_theory, cfg.alpha)
            for j, s in enumerate(tr.steps):
                rec = tr.record(j)
                pred = theory.total_U_drift(min(max(rec.U, 1.0 / cfg.K), 1.0), rec.V,
                                            cfg.N, cfg.K, m, cfg.alpha).total
                rows.append([axis, value, i, int(s), rec.U, rec.V, rec.q, rec.S, rec.H, rec.M,
                             rec.p_max, float(mf[j]), pred, tr.consensus_step])
        slopes = [estimators.early_drift_slope(tr, _early_window(tr, cfg)).value
                  for tr in ens.trajectories if len(tr.steps) >= 2]
        early = estimators.mean_and_sem(slopes) if slopes else None
        sym = theory.injection_U_drift(1.0 / cfg.K, cfg.N, m, cfg.alpha)
        cons = ens.consensus_steps
        t_theory = None
        if cfg.stop != STOP_NONE and 1.0 / cfg.K < cfg.U_star < 1.0 and not math.isinf(m):
            t_theory = theory.consensus_time(cfg.U_star, cfg.K, cfg.N, m, cfg.alpha)
        summary.append([
            axis, value, m, cfg.N, cfg.alpha, trials, ens.decided,
            early.value if early else None, early.std_error if early else None, sym,
            early.value * cfg.N**2 / cfg.alpha**2 if early else None,
            float(np.median(cons)) if cons else None, t_theory])
    paths = [write_csv(os.path.join(args.out, "sweep.csv"), SWEEP_HEADER, rows),
             write_csv(os.path.join(args.out, "sweep_summary.csv"), SWEEP_SUMMARY_HEADER, summary)]
    conf = base.to_dict()
    conf.update(axis=axis, values=sorted(values), trials=trials)
    return paths, conf, seed


DRIFT_HEADER = ["snapshot", "kind", "step", "N", "K", "alpha", "m", "q", "U", "V",
                "measured", "std_error", "predicted", "pull", "samples", "expected_minority",
                "reliable"]


def cmd_drift_check(args, raw):
    seed = args.seed if args.seed is not None else raw.get("seed", 0)
    cfg = sim_config_from(raw, seed=seed)
    if not cfg.channel.quantized:
        raise raw.error("channel", "drift-check needs a quantized channel (hard or topm)")
    count = raw.get("snapshots", 30)
    samples = raw.get("samples", 100_000)
    kind = raw.get("snapshot_kind", "trajectory")
    root = RandomSource(seed)
    N, K, alpha, m = cfg.N, cfg.K, cfg.alpha, cfg.channel.bandwidth
    snaps = []
    if kind == "trajectory":
        t_char = m * N**2 / alpha**2
        first = raw.get("first_step", max(1, N))
        # later snapshots sit near a vertex, where minority messages are too
        # rare for a desk-scale sample to resolve the excess
        last = raw.get("last_step", int(t_char))
        steps = estimators.log_spaced_steps(first, last, count)
        states = estimators.snapshot_states(N, K, alpha, ChannelSpec.hard(), steps,
                                            root.derive(SNAPSHOT, 0))
        snaps = [("trajectory", s, X) for s, X in zip(steps, states)]
    elif kind == "homogeneous":
        gen = root.derive(SNAPSHOT, 1).generator()
        for i in range(count):
            x = gen.dirichlet(np.ones(K))
            snaps.append(("homogeneous", 0, np.repeat(x[None, :], N, axis=0)))
    else:
        raise raw.error("snapshot_kind", f"must be 'trajectory' or 'homogeneous', got {kind!r}")
    if raw.get("include_consensus", False):
        X = np.zeros((N, K))
        X[:, 0] = 1.0
        snaps.append(("consensus", 0, X))
    rows = []
    for i, (k, s, X) in enumerate(snaps):
        ex = estimators.excess_drift(X, cfg.channel, alpha, samples, root.derive(SNAPSHOT, 100 + i))
        U = float(np.dot(X.mean(0), X.mean(0)))
        rows.append([i, k, s, N, K, alpha, m, ex.q, U, N * (ex.q - U), ex.estimate.value,
                     ex.estimate.std_error, ex.predicted, ex.estimate.pull(ex.predicted), samples,
                     ex.expected_minority, ex.reliable])
    paths = [write_csv(os.path.join(args.out, "drift_check.csv"), DRIFT_HEADER, rows)]
    conf = cfg.to_dict()
    conf.update(snapshots=count, samples=samples, snapshot_kind=kind)
    return paths, conf, seed


FIXATION_HEADER = ["N", "h", "alpha", "m", "trials", "decided", "undecided", "wins_label_0",
                   "estimate", "std_error", "wilson_low", "wilson_high", "gamma_h", "theory", "N_c"]


def cmd_fixation(args, raw):
    if raw.get("K", 2) != 2:
        raise raw.error("K", "fixation runs need K = 2 (the bias tilt is defined for two labels)")
    seed = args.seed if args.seed is not None else raw.get("seed", 0)
    trials = args.trials or raw.get("trials", 100)
    N_values = raw.require("N_values")
    h_values = raw.require("h_values")
    if not N_values:
        raise raw.error("N_values", "must list at least one population size")
    if not h_values:
        raise raw.error("h_values", "must list at least one bias")
    base_N = int(N_values[0])
    over = {"K": 2, "N": base_N, "seed": seed}
    if "stop" not in raw:
        over["stop"] = STOP_ABSORPTION
    base = sim_config_from(raw, **over)
    rows = []
    fit_points = []
    for N in sorted(int(n) for n in N_values):
        for h in sorted(float(v) for v in h_values):
            ch = ChannelSpec(base.channel.kind, base.channel.m, base.channel.temperature, h)
            cfg = base.with_(N=N, channel=ch, seed=seed)
            ens = run_ensemble(cfg, trials, args.workers)
            m = cfg.channel.bandwidth
            cross = theory.crossover(N, m, cfg.alpha, h)
            if ens.decided:
                est = estimators.fixation_estimate(ens, 0)
                vals = [est.value, est.std_error, est.wilson_low, est.wilson_high]
            else:
                vals = [None] * 4
            p0 = float(np.mean(np.asarray(_initial_mean(cfg))[..., 0]))
            if ens.decided and abs(p0 - 0.5) < 1e-12 and cross.gamma_h != 0.0:
                fit_points.append((cross.gamma_h, est.value, est.std_error))
            rows.append([N, h, cfg.alpha, m, trials, ens.decided, ens.undecided,
                         int(ens.winner_counts[0]), *vals, cross.gamma_h,
                         theory.fixation_probability(p0, cross.gamma_h), cross.N_c])
    paths = [write_csv(os.path.join(args.out, "fixation.csv"), FIXATION_HEADER, rows)]
    conf = base.to_dict()
    conf.update(N_values=sorted(N_values), h_values=sorted(h_values), trials=trials)
    if fit_points:
        # fitted scale of gamma_h in the logistic law, next to the nominal c = 1
        g, f, se = map(list, zip(*fit_points))
        fit = estimators.fixation_scale_fit(g, f, se)
        paths.append(write_csv(os.path.join(args.out, "estimates.csv"), ESTIMATE_HEADER,
                               [estimate_row("gamma_scale", fit, config_hash(conf))]))
    return paths, conf, seed


def _initial_mean(cfg):
    from .dynamics import initial_state
    return initial_state(cfg, RandomSource(cfg.seed)).mean(axis=0)


THEORY_HEADER = ["t", "tau", "U", "consensus_time"]


def cmd_theory(args, raw):
    cfg = sim_config_from(raw, seed=raw.get("seed", 0))
    m = cfg.channel.bandwidth
    if math.isinf(m):
        raise raw.error("channel", "the mean-field curve needs a quantized channel")
    points = raw.get("points", 201)
    grid = np.linspace(0, cfg.horizon, points)
    t_cons = theory.consensus_time(cfg.U_star, cfg.K, cfg.N, m, cfg.alpha)
    rows = [[t, tau, U, t_cons] for t, tau, U in theory.theory_curve(grid, cfg.N, cfg.K, m, cfg.alpha)]
    paths = [write_csv(os.path.join(args.out, "theory.csv"), THEORY_HEADER, rows)]
    return paths, cfg.to_dict(), cfg.seed


COMMANDS = {
    "run": cmd_run,
    "sweep": cmd_sweep,
    "drift-check": cmd_drift_check,
    "fixation": cmd_fixation,
    "theory": cmd_theory,
}


def build_parser():
    p = argparse.ArgumentParser(prog="qsg", description="Quantized simplex gossip experiments")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("config", help="run config file (flat TOML)")
        sp.add_argument("-o", "--out", default=".", help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="override the config seed")
        sp.add_argument("--trials", type=int, default=None, help="override the trial count")
        sp.add_argument("--workers", type=int, default=None,
                        help="parallel trial workers (default: $QSG_WORKERS or 1)")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.workers is None:
        args.workers = default_workers()
    started = now_iso()
    try:
        raw = load_config(args.config)
        if args.trials is not None and args.trials < 1:
            raise ConfigError("must be >= 1", "trials")
        os.makedirs(args.out, exist_ok=True)
        paths, conf, seed = COMMANDS[args.command](args, raw)
        manifest = write_manifest(args.out, args.command, conf, seed, paths, started, _build_id())
    except ConfigError as exc:
        print(f"qsg: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        log.debug("runtime failure", exc_info=True)
        print(f"qsg: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    log.info("wrote %s", manifest)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
