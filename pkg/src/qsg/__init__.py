"""Quantized simplex gossip: agents on the probability simplex exchanging
sampled messages, with the closed-form drift theory and Monte Carlo
estimators to check it."""

__version__ = "0.1.0"

from .channels import ChannelSpec, effective_bandwidth, emit_message
from .dynamics import (EnsembleResult, PopulationState, SimConfig, Trajectory,
                       detect_absorption, run, run_ensemble, select_pair, step)
from .observables import (ObservableRecord, coordination, disagreement, entropy_magnetization,
                          mean, observe, one_vs_rest_maps, polarization, self_overlap)
from .rng import RandomSource
from .simplex import (bias_tilt, empirical_message, listener_update, sample_label, temper,
                      uniform_vector, vertex)

__all__ = [
    "ChannelSpec", "EnsembleResult", "ObservableRecord", "PopulationState", "RandomSource",
    "SimConfig", "Trajectory", "bias_tilt", "coordination", "detect_absorption",
    "disagreement", "effective_bandwidth", "emit_message", "empirical_message",
    "entropy_magnetization", "listener_update", "mean", "observe", "one_vs_rest_maps",
    "polarization", "run", "run_ensemble", "sample_label", "select_pair", "self_overlap",
    "step", "temper", "uniform_vector", "vertex",
]
